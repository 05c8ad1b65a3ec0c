"""Vocabulary construction and per-instance preprocessing for training and generation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import (KnowledgeGraph, PreparedGraph, SciAnnotation, collapse_with_mentions,
                    prepare_graph)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)
UNK_REL = "<unk-rel>"


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    @classmethod
    def build(cls, counts: Counter, threshold: int = 5) -> "Vocabulary":
        """Keep tokens seen at least ``threshold`` times, most frequent first."""
        keep = sorted((t for t, c in counts.items() if c >= threshold and t not in SPECIALS),
                      key=lambda t: (-counts[t], t))
        return cls(keep)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, self.stoi[UNK])

    @property
    def unk(self) -> int:
        return self.stoi[UNK]

    @property
    def bos(self) -> int:
        return self.stoi[BOS]

    @property
    def eos(self) -> int:
        return self.stoi[EOS]


def unit(phrase: Sequence[str]) -> str:
    """Atomic target-side token for an entity phrase."""
    return " ".join(phrase)


@dataclass
class Instance:
    """A preprocessed example.

    ``target`` is the canonicalized abstract where every entity mention is a
    single atomic unit; ``target_entity[t]`` is the entity index for such
    units and -1 for ordinary words. It does not include the final EOS.
    """

    title: list[str]
    kg: KnowledgeGraph
    graph: PreparedGraph
    target: list[str] = field(default_factory=list)
    target_entity: list[int] = field(default_factory=list)

    @property
    def entity_units(self) -> list[str]:
        return [unit(p) for p, _ in self.kg.entities]

    def reference_text(self) -> str:
        return " ".join(self.target)


def canonicalize(a: SciAnnotation, kg: KnowledgeGraph, mention_to_entity: list[int]
                 ) -> tuple[list[str], list[int]]:
    """Rewrite mentions in the abstract as atomic canonical units (longest match first)."""
    patterns: dict[tuple[str, ...], int] = {}
    for (phrase, _), e in zip(a.entity_mentions, mention_to_entity):
        patterns.setdefault(tuple(phrase), e)
    for e, (phrase, _) in enumerate(kg.entities):
        patterns.setdefault(tuple(phrase), e)
    lengths = sorted({len(p) for p in patterns}, reverse=True)
    out, ents = [], []
    toks, i = a.abstract, 0
    while i < len(toks):
        for n in lengths:
            e = patterns.get(tuple(toks[i:i + n]))
            if e is not None and i + n <= len(toks):
                out.append(unit(kg.entities[e][0]))
                ents.append(e)
                i += n
                break
        else:
            out.append(toks[i])
            ents.append(-1)
            i += 1
    return out, ents


def make_instance(a: SciAnnotation, keep_relations: bool = True,
                  entities_override: Sequence[Sequence[str]] | None = None) -> Instance:
    kg, m2e = collapse_with_mentions(a)
    target, ents = canonicalize(a, kg, m2e)
    if entities_override is not None:
        kg = KnowledgeGraph([(tuple(p), "OtherScientificTerm") for p in entities_override], [])
        keep = {unit(p): i for i, (p, _) in enumerate(kg.entities)}
        ents = [keep.get(t, -1) if e >= 0 else -1 for t, e in zip(target, ents)]
    elif not keep_relations:
        kg = KnowledgeGraph(kg.entities, [])
    return Instance(list(a.title), kg, prepare_graph(kg), target, ents)


def preprocess(train: Sequence[SciAnnotation], threshold: int = 5,
               keep_relations: bool = True) -> tuple[Vocabulary, list[str], list[Instance]]:
    """Build the vocabulary and relation-label list from the training split.

    Counts cover title tokens, entity phrase words and target-stream tokens
    (words plus atomic mention units).
    """
    instances = [make_instance(a, keep_relations) for a in train]
    counts: Counter = Counter()
    labels: list[str] = []
    for inst in instances:
        counts.update(inst.title)
        counts.update(inst.target)
        for phrase, _ in inst.kg.entities:
            counts.update(phrase)
        for _, lab, _ in inst.kg.edges:
            if lab not in labels:
                labels.append(lab)
    return Vocabulary.build(counts, threshold), sorted(labels) + [UNK_REL], instances
