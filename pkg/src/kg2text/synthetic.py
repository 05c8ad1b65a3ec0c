"""Synthetic knowledge-graph/abstract corpora with SciIE-shaped annotations.

Entity names are invented pseudo-words unique to each instance, so at the
usual frequency threshold they fall outside the vocabulary and can only be
produced by copying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ENTITY_TYPES, RELATION_LABELS, SciAnnotation

_CONS = "bdfgklmnprstvz"
_VOWS = "aeiou"

TEMPLATES = {
    "Used-for": ["we use {h} for {t} .", "{h} is used for {t} ."],
    "Compare": ["{h} is compared with {t} .", "we compare {h} and {t} ."],
    "Feature-of": ["{h} is a feature of {t} ."],
    "Hyponym-of": ["{h} is a kind of {t} ."],
    "Evaluate-for": ["{h} is evaluated on {t} .", "we evaluate {t} with {h} ."],
    "Conjunction": ["{h} and {t} are combined ."],
}
INTROS = ["we study {e} .", "this paper presents {e} .", "we propose {e} ."]
TITLES = ["{a} for {b}", "towards {a} with {b}", "learning {a} and {b}", "{a} via {b}"]
ABBREV = ["{x} works well .", "{x} is fast ."]


@dataclass
class SyntheticSpec:
    n: int = 20
    entities: tuple[int, int] = (3, 6)
    relations: tuple[int, int] = (1, 4)
    abstract_len: tuple[int, int] = (20, 40)
    filler_words: int = 150
    filler_sentences: int = 40
    coref_rate: float = 0.3


def _pseudo_word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(rng.choice(list(_CONS)) + rng.choice(list(_VOWS)) for _ in range(syllables))


class _Names:
    def __init__(self, rng):
        self.rng, self.used = rng, set()

    def fresh(self, syllables: int = 3) -> str:
        while True:
            w = _pseudo_word(self.rng, syllables)
            if w not in self.used:
                self.used.add(w)
                return w


def _filler_bank(rng, names: _Names, spec: SyntheticSpec) -> list[list[str]]:
    words = [names.fresh(2) for _ in range(spec.filler_words)]
    bank = []
    for _ in range(spec.filler_sentences):
        k = int(rng.integers(4, 9))
        bank.append([words[i] for i in rng.choice(len(words), size=k)] + ["."])
    return bank


def synthetic_instance(rng: np.random.Generator, names: _Names, bank: list[list[str]],
                       spec: SyntheticSpec) -> SciAnnotation:
    n_ent = int(rng.integers(spec.entities[0], spec.entities[1] + 1))
    phrases = [tuple(names.fresh() for _ in range(int(rng.integers(1, 4)))) for _ in range(n_ent)]
    mentions = [(p, str(rng.choice(ENTITY_TYPES))) for p in phrases]
    clusters = []
    abbrev_of = {}
    for i, p in enumerate(phrases):
        if len(p) > 1 and rng.random() < spec.coref_rate:
            short = ("".join(w[0] for w in p) + "x",)
            abbrev_of[i] = len(mentions)
            clusters.append([i, len(mentions)])
            mentions.append((short, mentions[i][1]))

    n_rel = int(rng.integers(spec.relations[0], spec.relations[1] + 1))
    rels = []
    pairs = [(h, t) for h in range(n_ent) for t in range(n_ent) if h != t]
    for k in rng.permutation(len(pairs))[:n_rel]:
        h, t = pairs[k]
        rels.append((h, str(rng.choice(RELATION_LABELS)), t))

    def say(template: str, **kw) -> list[str]:
        return template.format(**{k: " ".join(v) for k, v in kw.items()}).split()

    sents = [say(str(rng.choice(INTROS)), e=phrases[0])]
    for h, lab, t in rels:
        sents.append(say(str(rng.choice(TEMPLATES[lab])), h=phrases[h], t=phrases[t]))
    for i, j in abbrev_of.items():
        sents.append(say(str(rng.choice(ABBREV)), x=mentions[j][0]))
    mentioned = {0} | {h for h, _, _ in rels} | {t for _, _, t in rels}
    for i in range(n_ent):
        if i not in mentioned:
            sents.append(say(str(rng.choice(INTROS)), e=phrases[i]))
    abstract = [w for s in sents for w in s]
    lo, hi = spec.abstract_len
    while len(abstract) < lo:
        abstract += bank[int(rng.integers(len(bank)))]
    while len(abstract) > hi and len(sents) > 1:
        sents.pop()
        abstract = [w for s in sents for w in s]
    title = say(str(rng.choice(TITLES)), a=phrases[0], b=phrases[1 % n_ent])
    return SciAnnotation(title, abstract, mentions, clusters, rels)


def synthetic_corpus(spec: SyntheticSpec | None = None, seed: int = 0) -> list[SciAnnotation]:
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(seed)
    names = _Names(rng)
    bank = _filler_bank(rng, names, spec)
    return [synthetic_instance(rng, names, bank, spec) for _ in range(spec.n)]


def synthetic_splits(spec: SyntheticSpec, n_valid: int, n_test: int, seed: int = 0
                     ) -> dict[str, list[SciAnnotation]]:
    """Train/valid/test splits drawn from one generator (shared filler bank)."""
    rng = np.random.default_rng(seed)
    names = _Names(rng)
    bank = _filler_bank(rng, names, spec)
    make = lambda k: [synthetic_instance(rng, names, bank, spec) for _ in range(k)]
    return {"train": make(spec.n), "valid": make(n_valid), "test": make(n_test)}


def paraphrase(a: SciAnnotation, rng: np.random.Generator) -> SciAnnotation:
    """Same knowledge, new title template: a test-time neighbour of a training instance."""
    phrases = [p for p, _ in a.entity_mentions]
    n_ent = len({tuple(p) for p in phrases})
    title = str(rng.choice(TITLES)).format(a=" ".join(phrases[0]), b=" ".join(phrases[1 % n_ent]))
    return SciAnnotation(title.split(), list(a.abstract), list(a.entity_mentions),
                         [list(c) for c in a.coref_clusters], list(a.relations))
