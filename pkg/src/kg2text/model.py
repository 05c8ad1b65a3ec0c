"""GraphWriter-style encoder-decoder with its batching and checkpoint format."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import decoder as dec
from . import encoders as enc
from .autodiff import Tensor
from .graph import Entity, Global, RelationFwd, RelationRev
from .params import ParamStore
from .preprocess import BOS, EOS, UNK, Instance, Vocabulary

CHECKPOINT_FORMAT = "kg2text-ckpt/1"
PROB_FLOOR = 1e-12
VARIANTS = ("graph_transformer", "gat", "entity_only")


@dataclass
class ModelConfig:
    d: int = 500
    heads: int = 4
    layers: int = 6
    ffn: int = 2000
    dropout: float = 0.3
    variant: str = "graph_transformer"
    copy: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def encoder(self) -> str:
        return "gat" if self.variant == "gat" else "graph_transformer"

    @property
    def keep_relations(self) -> bool:
        return self.variant != "entity_only"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Batch:
    size: int
    phrase_ids: np.ndarray
    phrase_mask: np.ndarray
    vertex_src: np.ndarray
    v_mask: np.ndarray
    att_mask: np.ndarray
    global_pos: np.ndarray
    title_ids: np.ndarray
    t_mask: np.ndarray
    cand_src: np.ndarray
    c_mask: np.ndarray
    cand_strings: list[list[str]]
    entity_rows: list[list[int]]
    dec_in: np.ndarray | None = None
    vocab_id: np.ndarray | None = None
    vocab_weight: np.ndarray | None = None
    align: np.ndarray | None = None
    loss_mask: np.ndarray | None = None


def _label_index(labels: Sequence[str]) -> dict[str, int]:
    return {lab: i for i, lab in enumerate(labels)}


def make_batch(instances: Sequence[Instance], vocab: Vocabulary, labels: Sequence[str],
               with_targets: bool = True) -> Batch:
    B = len(instances)
    lab_ix = _label_index(labels)
    unk_rel = len(labels) - 1
    nL = len(labels)

    # rows follow vertex order so a permuted graph gets its own phrases
    phrases = [v.phrase for inst in instances for v in inst.graph.vertices if isinstance(v, Entity)]
    P = len(phrases)
    Lp = max((len(p) for p in phrases), default=0)
    phrase_ids = np.zeros((P, Lp), dtype=np.int64)
    phrase_mask = np.zeros((P, Lp))
    for r, p in enumerate(phrases):
        phrase_ids[r, :len(p)] = [vocab.id(w) for w in p]
        phrase_mask[r, :len(p)] = 1.0

    n = max(inst.graph.n for inst in instances)
    pad_row = P + 2 * nL + 1
    vertex_src = np.full((B, n), pad_row, dtype=np.int64)
    v_mask = np.zeros((B, n), dtype=bool)
    att_mask = np.zeros((B, n, n), dtype=bool)
    global_pos = np.zeros(B, dtype=np.int64)
    m = max(len(inst.title) for inst in instances)
    title_ids = np.zeros((B, m), dtype=np.int64)
    t_mask = np.zeros((B, m))
    M = max(len(inst.graph.entity_indices()) + len(inst.title) for inst in instances)
    cand_src = np.zeros((B, M), dtype=np.int64)
    c_mask = np.zeros((B, M), dtype=bool)
    cand_strings, entity_rows = [], []

    row = 0
    for b, inst in enumerate(instances):
        if not inst.title:
            raise ValueError("instance has an empty title")
        rows = []
        ent_vertex = []
        for i, v in enumerate(inst.graph.vertices):
            if isinstance(v, Entity):
                vertex_src[b, i] = row
                rows.append(row)
                ent_vertex.append(i)
                row += 1
            elif isinstance(v, RelationFwd):
                vertex_src[b, i] = P + lab_ix.get(v.label, unk_rel)
            elif isinstance(v, RelationRev):
                vertex_src[b, i] = P + nL + lab_ix.get(v.label, unk_rel)
            elif isinstance(v, Global):
                vertex_src[b, i] = P + 2 * nL
                global_pos[b] = b * n + i
        k = inst.graph.n
        v_mask[b, :k] = True
        att_mask[b, :k, :k] = inst.graph.adjacency.T
        title_ids[b, :len(inst.title)] = [vocab.id(w) for w in inst.title]
        t_mask[b, :len(inst.title)] = 1.0
        strings = [" ".join(inst.graph.vertices[i].phrase) for i in ent_vertex]
        srcs = [b * n + i for i in ent_vertex]
        strings += list(inst.title)
        srcs += [B * n + b * m + j for j in range(len(inst.title))]
        cand_src[b, :len(srcs)] = srcs
        c_mask[b, :len(srcs)] = True
        cand_strings.append(strings)
        entity_rows.append(rows)

    batch = Batch(B, phrase_ids, phrase_mask, vertex_src, v_mask, att_mask, global_pos,
                  title_ids, t_mask, cand_src, c_mask, cand_strings, entity_rows)
    if with_targets:
        _add_targets(batch, instances, vocab)
    return batch


def _add_targets(batch: Batch, instances: Sequence[Instance], vocab: Vocabulary) -> None:
    B = batch.size
    Tm = max(len(inst.target) + 1 for inst in instances)
    M = batch.cand_src.shape[1]
    n_words = len(vocab)
    dec_in = np.zeros((B, Tm), dtype=np.int64)
    vocab_id = np.zeros((B, Tm), dtype=np.int64)
    vocab_weight = np.zeros((B, Tm))
    align = np.zeros((B, Tm, M), dtype=bool)
    loss_mask = np.zeros((B, Tm))
    for b, inst in enumerate(instances):
        toks = inst.target + [EOS]
        ents = inst.target_entity + [-1]
        prev = vocab.bos
        for t, (tok, e) in enumerate(zip(toks, ents)):
            dec_in[b, t] = prev
            cands = batch.cand_strings[b]
            hits = [j for j, s in enumerate(cands) if s == tok] if tok != EOS else []
            align[b, t, hits] = True
            vocab_id[b, t] = vocab.id(tok)
            vocab_weight[b, t] = 1.0 if (tok in vocab or not hits) else 0.0
            loss_mask[b, t] = 1.0
            prev = n_words + batch.entity_rows[b][e] if e >= 0 else vocab.id(tok)
    batch.dec_in, batch.vocab_id, batch.vocab_weight = dec_in, vocab_id, vocab_weight
    batch.align, batch.loss_mask = align, loss_mask


@dataclass
class Encoded:
    V0: Tensor
    VL: Tensor
    T: Tensor
    phrases: Tensor | None
    memory: dec.Memory
    init: dec.State


@dataclass
class StepOutput:
    p: float
    alpha_copy: np.ndarray
    alpha_vocab: np.ndarray
    mixture: np.ndarray  # over the extended output ids of the session
    state: dec.State


class GraphWriter:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, labels: Sequence[str], seed: int = 0):
        self.cfg = cfg
        self.vocab = vocab
        self.labels = list(labels)
        self.params = ParamStore(np.random.default_rng(seed))
        enc.init_encoder(self.params, cfg.d, cfg.heads, cfg.layers, cfg.ffn, len(vocab),
                         len(self.labels), cfg.encoder)
        dec.init_decoder(self.params, cfg.d, cfg.heads, len(vocab))

    # ------------------------------------------------------------- forward

    def encode(self, batch: Batch, training: bool = False, rng=None) -> Encoded:
        ps, cfg = self.params, self.cfg
        V0, phrases = enc.embed_vertices(ps, batch.phrase_ids, batch.phrase_mask, batch.vertex_src)
        VL = enc.encode_layers(ps, V0, batch.att_mask, cfg.heads, cfg.layers, cfg.encoder,
                               cfg.dropout, training, rng)
        T = enc.encode_title(ps, batch.title_ids, batch.t_mask)
        B, n, d = VL.shape
        m = T.shape[1]
        flat = ad.concat([VL.reshape(B * n, d), T.reshape(B * m, d)], axis=0)
        cands = ad.gather_rows(flat, batch.cand_src.reshape(-1)).reshape(B, -1, d)
        memory = dec.build_memory(ps, VL, batch.v_mask, T, batch.t_mask > 0, cands, batch.c_mask,
                                  cfg.heads)
        init = dec.initial_state(ps, ad.gather_rows(VL.reshape(B * n, d), batch.global_pos))
        return Encoded(V0, VL, T, phrases, memory, init)

    def _input_table(self, phrases: Tensor | None) -> Tensor:
        w = self.params["emb.word"]
        return w if phrases is None else ad.concat([w, phrases], axis=0)

    def teacher_forced(self, batch: Batch, training: bool = False, rng=None):
        """Run the decoder over the gold prefix; returns (p, a_copy, a_vocab) for all steps."""
        e = self.encode(batch, training, rng)
        X = ad.gather_rows(self._input_table(e.phrases), batch.dec_in)
        state = e.init
        hs, cs = [], []
        for t in range(batch.dec_in.shape[1]):
            state = dec.step(self.params, X[:, t, :], state, e.memory)
            hs.append(state.h)
            cs.append(state.ctx)
        H, C = ad.stack(hs, axis=1), ad.stack(cs, axis=1)
        return dec.output_distributions(self.params, H, C, e.memory)

    def target_probabilities(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        p, a_copy, a_vocab = self.teacher_forced(batch, training, rng)
        if not self.cfg.copy:
            return ad.take_last(a_vocab, batch.vocab_id)
        return dec.mixture_probability(p, a_copy, a_vocab, batch.align, batch.vocab_id,
                                       batch.vocab_weight)

    def loss(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        """Mean over instances of the per-token mean negative log-likelihood."""
        probs = self.target_probabilities(batch, training, rng)
        nll = -ad.log(ad.clamp_min(probs, PROB_FLOOR))
        lengths = batch.loss_mask.sum(axis=1, keepdims=True)
        w = batch.loss_mask / (lengths * batch.size)
        return ad.tsum(nll * w)

    # ------------------------------------------------------------ decoding

    def session(self, inst: Instance) -> "DecodeSession":
        return DecodeSession(self, inst)

    # --------------------------------------------------------- checkpoints

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "model": asdict(self.cfg),
            "vocab": self.vocab.itos,
            "labels": self.labels,
            "extra": extra or {},
        }
        arrays = {f"p:{k}": v for k, v in self.params.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "GraphWriter":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
            state = {k[2:]: z[k] for k in z.files if k.startswith("p:")}
        vocab = Vocabulary()
        for tok in meta["vocab"]:
            vocab.add(tok)
        model = cls(ModelConfig.from_dict(meta["model"]), vocab, meta["labels"])
        model.params.load_state_dict(state)
        model.meta = meta
        return model


class DecodeSession:
    """Step-wise decoding of one instance over an extended output space.

    Output ids are the vocabulary ids followed by one extra id per copy
    candidate string that has no vocabulary entry, so the mixture of copy and
    vocabulary mass forms one distribution.
    """

    def __init__(self, model: GraphWriter, inst: Instance):
        self.model = model
        vocab = model.vocab
        self.batch = make_batch([inst], vocab, model.labels, with_targets=False)
        self.enc = model.encode(self.batch)
        V = len(vocab)
        self.strings = list(vocab.itos)
        index = dict(vocab.stoi)
        cand_out = []
        for s in self.batch.cand_strings[0]:
            if s not in index:
                index[s] = len(self.strings)
                self.strings.append(s)
            cand_out.append(index[s])
        self.cand_out = np.asarray(cand_out, dtype=np.int64)
        self.n_out = len(self.strings)
        # which input row feeds the next step after emitting each output id
        units = {u: r for u, r in zip(self.batch.cand_strings[0], self.batch.entity_rows[0])}
        self.input_row = np.array([V + units[s] if s in units else (i if i < V else vocab.unk)
                                   for i, s in enumerate(self.strings)], dtype=np.int64)
        self.table = model._input_table(self.enc.phrases)
        self.bos, self.eos = vocab.bos, vocab.eos

    def initial_state(self) -> dec.State:
        return self.enc.init

    def step(self, tokens: np.ndarray, state: dec.State) -> StepOutput:
        tokens = np.asarray(tokens, dtype=np.int64)
        k = len(tokens)
        mem = self.enc.memory.select(np.zeros(k, dtype=np.int64))
        x = ad.gather_rows(self.table, self.input_row[tokens])
        new = dec.step(self.model.params, x, state, mem)
        p, a_copy, a_vocab = dec.output_distributions(
            self.model.params, new.h.reshape(k, 1, -1), new.ctx.reshape(k, 1, -1), mem)
        p = p.data[:, 0]
        a_copy = a_copy.data[:, 0, :len(self.cand_out)]
        a_vocab = a_vocab.data[:, 0, :]
        mix = np.zeros((k, self.n_out))
        if self.model.cfg.copy:
            mix[:, :a_vocab.shape[1]] = (1.0 - p)[:, None] * a_vocab
            for j, o in enumerate(self.cand_out):
                mix[:, o] += p * a_copy[:, j]
        else:
            mix[:, :a_vocab.shape[1]] = a_vocab
        return StepOutput(p, a_copy, a_vocab, mix, new)

    def log_probs(self, tokens: np.ndarray, state: dec.State) -> tuple[np.ndarray, dec.State]:
        out = self.step(tokens, state)
        with np.errstate(divide="ignore"):
            return np.log(out.mixture), out.state

    def reorder(self, state: dec.State, idx) -> dec.State:
        return state.select(idx)

    def to_text(self, ids: Sequence[int]) -> str:
        return " ".join(self.strings[i] for i in ids if i != self.eos)
