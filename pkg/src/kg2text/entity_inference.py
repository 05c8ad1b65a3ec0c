"""Predicting related entities from a title alone, for title-only generation.

A shared BiRNN text encoder embeds titles and entity phrases; it is trained with
a cosine embedding loss against negative samples. At query time, training
titles whose entity sets overlap the query (Jaccard similarity above a
threshold) contribute their abstract entities, which are ranked by cosine
similarity to the embedded query title.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import embed_phrases
from .generator import generate_text
from .graph import KnowledgeGraph, SciAnnotation, collapse_coref, prepare_graph
from .layers import init_birnn
from .params import ParamStore
from .preprocess import Instance, Vocabulary
from .trainer import TrainConfig, lr_at

log = logging.getLogger(__name__)

EMBEDDER_FORMAT = "kg2text-embedder/1"


def normalize(phrase: str | Sequence[str]) -> str:
    if not isinstance(phrase, str):
        phrase = " ".join(phrase)
    return " ".join(phrase.lower().split())


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def cosine_embedding_loss(t: Tensor, e: Tensor, positive, margin: float = 0.0) -> Tensor:
    """Mean over rows of 1 - cos (positive pairs) or max(0, cos - margin) (negative pairs).

    ``positive`` is a bool or a per-row bool array; zero-norm rows have cosine 0.
    """
    cos = cosine(t, e)
    pos = np.broadcast_to(np.asarray(positive, dtype=np.float64), cos.shape)
    per = (1.0 - cos) * pos + ad.relu(cos - margin) * (1.0 - pos)
    return ad.mean(per)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim == 1:
        a, b = a.reshape(1, -1), b.reshape(1, -1)
    dot = ad.tsum(a * b, axis=-1)
    norms = ad.sqrt(ad.tsum(a * a, axis=-1) * ad.tsum(b * b, axis=-1) + 1e-300)
    return dot / ad.clamp_min(norms, 1e-12)


class EntityEmbedder:
    def __init__(self, vocab: Vocabulary, d: int = 32, margin: float = 0.0, seed: int = 0):
        self.vocab, self.d, self.margin = vocab, d, margin
        self.params = ParamStore(np.random.default_rng(seed))
        self.params.uniform("emb.word", (len(vocab), d))
        init_birnn(self.params, "phrase", d, d)

    def encode(self, texts: Sequence[Sequence[str]]) -> Tensor:
        L = max(len(t) for t in texts)
        ids = np.zeros((len(texts), max(L, 1)), dtype=np.int64)
        mask = np.zeros(ids.shape)
        for r, t in enumerate(texts):
            ids[r, :len(t)] = [self.vocab.id(w) for w in t]
            mask[r, :len(t)] = 1.0
        return embed_phrases(self.params, ids, mask)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return self.encode([normalize(t).split() for t in texts]).data

    def save(self, path: str | Path) -> None:
        meta = {"format": EMBEDDER_FORMAT, "vocab": self.vocab.itos, "d": self.d,
                "margin": self.margin}
        arrays = {f"p:{k}": v for k, v in self.params.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "EntityEmbedder":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("format") != EMBEDDER_FORMAT:
                raise ValueError(f"{path}: not an entity-embedder checkpoint")
            state = {k[2:]: z[k] for k in z.files if k.startswith("p:")}
        vocab = Vocabulary()
        for tok in meta["vocab"]:
            vocab.add(tok)
        emb = cls(vocab, meta["d"], meta["margin"])
        emb.params.load_state_dict(state)
        return emb


@dataclass
class IndexEntry:
    title: str
    title_entities: list[str]
    abstract_entities: list[str]


@dataclass
class TitleIndex:
    entries: list[IndexEntry] = field(default_factory=list)

    def __post_init__(self):
        self.phrases = sorted({e for ent in self.entries for e in ent.abstract_entities})

    def find_entities(self, title: str) -> list[str]:
        """Indexed phrases occurring in ``title`` on token boundaries."""
        padded = f" {normalize(title)} "
        return [p for p in self.phrases if f" {p} " in padded]

    def retrieve(self, query: Iterable[str], threshold: float = 0.7) -> list[int]:
        q = set(query)
        return [i for i, e in enumerate(self.entries) if jaccard(q, e.title_entities) > threshold]

    @classmethod
    def build(cls, annotations: Iterable[SciAnnotation]) -> "TitleIndex":
        rows = []
        for a in annotations:
            kg = collapse_coref(a)
            rows.append((normalize(a.title), list(dict.fromkeys(normalize(p) for p, _ in kg.entities))))
        idx = cls([IndexEntry(t, [], ents) for t, ents in rows])
        for entry in idx.entries:
            entry.title_entities = idx.find_entities(entry.title)
        return idx

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({"title": e.title, "title_entities": e.title_entities,
                                     "abstract_entities": e.abstract_entities}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TitleIndex":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                r = json.loads(line)
                entries.append(IndexEntry(r["title"], list(r["title_entities"]),
                                          list(r["abstract_entities"])))
        return cls(entries)


def subspans(tokens: Sequence[str], lo: int = 1, hi: int = 4) -> list[str]:
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i:i + n]))
    return list(dict.fromkeys(out))


def infer_entities(title: str, index: TitleIndex, embedder: EntityEmbedder, k: int = 12,
                   threshold: float = 0.7) -> list[str]:
    """Up to ``k`` entities from retrieved training abstracts, by cosine similarity to the title."""
    if not index.entries:
        log.warning("empty title index; no entities inferred")
        return []
    query = index.find_entities(title) or subspans(normalize(title).split())
    pool: list[str] = []
    for i in index.retrieve(query, threshold):
        pool += index.entries[i].abstract_entities
    pool = list(dict.fromkeys(pool))
    if not pool:
        return []
    vecs = embedder.embed([title] + pool)
    sims = cosine(Tensor(np.repeat(vecs[:1], len(pool), axis=0)), Tensor(vecs[1:])).data
    order = np.argsort(-sims, kind="stable")[:k]
    return [pool[i] for i in order]


def _pairs(items: list[tuple[list[str], list[str]]], negatives: int, rng: np.random.Generator):
    """(title, entity, positive) triples; negatives never come from the same instance."""
    pool = sorted({e for _, ents in items for e in ents})
    out = []
    for title, ents in items:
        own = set(ents)
        others = [e for e in pool if e not in own]
        for e in ents:
            out.append((title, e, True))
            if others and negatives:
                for j in rng.integers(len(others), size=negatives):
                    out.append((title, others[j], False))
    return out


def train_embedder(annotations: Sequence[SciAnnotation], negatives_per_positive: int = 5,
                   d: int = 32, epochs: int = 30, batch_size: int = 64, margin: float = 0.0,
                   cfg: TrainConfig | None = None, seed: int = 0
                   ) -> tuple[EntityEmbedder, list[float]]:
    cfg = cfg or TrainConfig(seed=seed)
    rng = np.random.default_rng(seed)
    items = []
    for a in annotations:
        ents = list(dict.fromkeys(normalize(p) for p, _ in collapse_coref(a).entities))
        if not ents:
            continue
        items.append((normalize(a.title).split(), ents))
    vocab = Vocabulary(sorted({w for t, ents in items for w in t + [x for e in ents for x in e.split()]}))
    emb = EntityEmbedder(vocab, d, margin, seed)
    params = emb.params.tensors()
    velocity = [np.zeros_like(p.data) for p in params]
    history, step = [], 0
    for _ in range(epochs):
        pairs = _pairs(items, negatives_per_positive, rng)
        order = rng.permutation(len(pairs))
        spe = math.ceil(len(pairs) / batch_size)
        losses = []
        for s in range(0, len(pairs), batch_size):
            chunk = [pairs[i] for i in order[s:s + batch_size]]
            emb.params.zero_grad()
            with ad.Tape():
                t = emb.encode([c[0] for c in chunk])
                e = emb.encode([c[1].split() for c in chunk])
                loss = cosine_embedding_loss(t, e, np.array([c[2] for c in chunk]), margin)
                ad.backward(loss)
            ad.sgd_momentum_step(params, [p.grad for p in params], velocity,
                                 lr_at(step, spe, cfg), cfg.momentum)
            losses.append(float(loss.data))
            step += 1
        history.append(float(np.mean(losses)))
    return emb, history


def instance_from_entities(title: Sequence[str], phrases: Sequence[str]) -> Instance:
    """Relation-free graph over the given entities plus the global vertex."""
    kg = KnowledgeGraph([(tuple(p.split()), "OtherScientificTerm") for p in phrases], [])
    return Instance(list(title), kg, prepare_graph(kg))


def infer_entity_writer(title: str, index: TitleIndex, embedder: EntityEmbedder, model,
                        k: int = 12, threshold: float = 0.7, beam_size: int = 4,
                        max_len: int = 250) -> str:
    ents = infer_entities(title, index, embedder, k, threshold)
    return generate_text(model, instance_from_entities(title.split(), ents), beam_size, max_len)
