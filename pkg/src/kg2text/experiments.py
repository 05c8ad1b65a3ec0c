"""Desk-scale experiments shared by ``scripts/`` and the acceptance tests."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

from .entity_inference import TitleIndex, infer_entities, train_embedder
from .generator import bleu, decode_instance, generate_text
from .graph import SciAnnotation
from .model import GraphWriter, ModelConfig
from .preprocess import Instance, make_instance, preprocess
from .synthetic import SyntheticSpec, synthetic_corpus, synthetic_splits
from .trainer import TrainConfig, train

DESK = dict(d=64, heads=2, layers=2, ffn=256, dropout=0.0)


def overfit_config(**kw) -> TrainConfig:
    base = dict(max_epochs=200, batch_size=4, patience=None, stop_below=0.02)
    base.update(kw)
    return TrainConfig(**base)


def reproduction_rate(model: GraphWriter, instances: Sequence[Instance], max_len: int = 100
                      ) -> float:
    """Fraction of target positions greedy decoding gets right (OOV words count as unk)."""
    ok = total = 0
    for inst in instances:
        units, _ = decode_instance(model, inst, 1, max_len)
        cands = set(inst.entity_units)
        want = [u if u in model.vocab or u in cands else "<unk>" for u in inst.target]
        ok += sum(a == b for a, b in zip(units, want))
        total += len(want)
    return ok / max(1, total)


@dataclass
class OverfitResult:
    losses: list[float]
    first_below: int | None     # first epoch with teacher-forced train loss < 0.1
    reproduction: float
    seconds: float
    model: GraphWriter = field(repr=False)


def overfit_oracle(n: int = 20, seed: int = 0, variant: str = "graph_transformer",
                   threshold: float = 0.1) -> OverfitResult:
    t0 = time.time()
    anns = synthetic_corpus(SyntheticSpec(n=n), seed=seed)
    mcfg = ModelConfig(**DESK, variant=variant)
    vocab, labels, insts = preprocess(anns, threshold=1, keep_relations=mcfg.keep_relations)
    res = train(mcfg, overfit_config(seed=seed), insts, [], vocab, labels)
    losses = [e.train_eval_loss for e in res.log]
    first = next((e.epoch for e in res.log if e.train_eval_loss < threshold), None)
    rate = reproduction_rate(res.model, insts)
    return OverfitResult(losses, first, rate, time.time() - t0, res.model)


def copy_ablation(seeds: Sequence[int] = (0, 1, 2), n_train: int = 40, n_test: int = 10,
                  epochs: int = 40, beam: int = 1) -> dict[str, list[float]]:
    """Held-out BLEU of the full model and of the copy-disabled model, per training seed.

    Entity names are fresh pseudo-words per instance, so test entities are
    never in the vocabulary and only copying can produce them.
    """
    splits = synthetic_splits(SyntheticSpec(n=n_train), 0, n_test, seed=0)
    vocab, labels, insts = preprocess(splits["train"], threshold=2)
    test = [make_instance(a) for a in splits["test"]]
    refs = [t.reference_text() for t in test]
    out: dict[str, list[float]] = {"copy": [], "no_copy": []}
    for seed in seeds:
        for name, copy in (("copy", True), ("no_copy", False)):
            cfg = TrainConfig(max_epochs=epochs, batch_size=4, patience=None, seed=seed)
            res = train(ModelConfig(**DESK, copy=copy), cfg, insts, [], vocab, labels)
            hyps = [generate_text(res.model, t, beam, 100) for t in test]
            out[name].append(bleu(hyps, refs))
    return out


def title_only_instance(a: SciAnnotation) -> Instance:
    return make_instance(a, keep_relations=False, entities_override=[])


def entity_inference_ablation(seeds: Sequence[int] = (0, 1, 2), n: int = 20,
                              embed_epochs: int = 30, beam: int = 1) -> dict[str, list[float]]:
    """BLEU of InferEntityWriter and the title-only ablation on the overfit corpus.

    Both use the same entity-only model per seed; the ablation sees no entities.
    """
    anns = synthetic_corpus(SyntheticSpec(n=n), seed=0)
    refs = [make_instance(a).reference_text() for a in anns]
    index = TitleIndex.build(anns)
    out: dict[str, list[float]] = {"inferred": [], "title_only": []}
    for seed in seeds:
        mcfg = ModelConfig(**DESK, variant="entity_only")
        vocab, labels, insts = preprocess(anns, threshold=1, keep_relations=False)
        model = train(mcfg, overfit_config(seed=seed), insts, [], vocab, labels).model
        emb, _ = train_embedder(anns, d=32, epochs=embed_epochs, seed=seed)
        inferred, bare = [], []
        for a in anns:
            ents = [p.split() for p in infer_entities(" ".join(a.title), index, emb)]
            inst = make_instance(a, keep_relations=False, entities_override=ents)
            inferred.append(generate_text(model, inst, beam, 100))
            bare.append(generate_text(model, title_only_instance(a), beam, 100))
        out["inferred"].append(bleu(inferred, refs))
        out["title_only"].append(bleu(bare, refs))
    return out


def median(xs: Sequence[float]) -> float:
    return statistics.median(xs)
