"""Beam search over the copy/vocabulary mixture, plus repetition pruning and corpus BLEU."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# step(tokens[k], state) -> (log-probs[k, V], new_state)
StepFn = Callable[[np.ndarray, Any], tuple[np.ndarray, Any]]
ReorderFn = Callable[[Any, np.ndarray], Any]


@dataclass
class BeamHypothesis:
    tokens: list[int]
    score: float
    finished: bool = False


@dataclass
class BeamResult:
    tokens: list[int]
    score: float
    finished: bool
    candidates: list[BeamHypothesis] = field(default_factory=list)


def beam_search(step: StepFn, reorder: ReorderFn, init_state: Any, bos: int, eos: int,
                beam_size: int = 4, max_len: int = 250) -> BeamResult:
    """Standard beam search scored by summed log-probabilities (no length normalization).

    Hypotheses that emit ``eos`` are frozen and compete by final score. Search
    stops once no live hypothesis can beat the best finished one.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    alive = [BeamHypothesis([], 0.0)]
    state = init_state
    last = np.array([bos])
    finished: list[BeamHypothesis] = []
    for _ in range(max_len):
        logp, state = step(last, state)
        scores = np.array([h.score for h in alive])[:, None] + logp
        flat = scores.reshape(-1)
        order = np.argsort(-flat, kind="stable")[:beam_size]
        V = logp.shape[1]
        keep, nxt = [], []
        for idx in order:
            if not np.isfinite(flat[idx]):
                break
            src, tok = divmod(int(idx), V)
            hyp = BeamHypothesis(alive[src].tokens + [tok], float(flat[idx]))
            if tok == eos:
                hyp.finished = True
                finished.append(hyp)
            else:
                keep.append(src)
                nxt.append(hyp)
        if not nxt:
            break
        alive = nxt
        best_done = max((h.score for h in finished), default=-math.inf)
        if best_done >= max(h.score for h in alive):
            break
        state = reorder(state, np.array(keep))
        last = np.array([h.tokens[-1] for h in alive])
    if finished:
        best = max(finished, key=lambda h: h.score)
        return BeamResult(best.tokens, best.score, True, finished)
    best = max(alive, key=lambda h: h.score)
    return BeamResult(best.tokens, best.score, False, alive)


def greedy_decode(step: StepFn, init_state: Any, bos: int, eos: int, max_len: int = 250
                  ) -> BeamResult:
    tokens, score, state, last = [], 0.0, init_state, np.array([bos])
    for _ in range(max_len):
        logp, state = step(last, state)
        tok = int(np.argmax(logp[0]))
        score = float(score + logp[0, tok])
        tokens.append(tok)
        if tok == eos:
            return BeamResult(tokens, score, True)
        last = np.array([tok])
    return BeamResult(tokens, score, False)


def exhaustive_search(step: StepFn, init_state: Any, bos: int, eos: int, max_len: int
                      ) -> BeamResult:
    """Best eos-terminated sequence of length <= max_len by full enumeration (tiny models only)."""
    best = BeamResult([], -math.inf, False)

    def go(tokens, score, state, last):
        nonlocal best
        if len(tokens) == max_len:
            return
        logp, new = step(np.array([last]), state)
        for tok in range(logp.shape[1]):
            s = score + logp[0, tok]
            if not np.isfinite(s):
                continue
            if tok == eos:
                if s > best.score:
                    best = BeamResult(tokens + [tok], float(s), True)
            else:
                go(tokens + [tok], s, new, tok)

    go([], 0.0, init_state, bos)
    return best


# ------------------------------------------------------------ post-processing

SENTENCE_END = {".", "!", "?"}
COORDINATORS = {",", "and", ";"}
_PUNCT = re.compile(r"^\W+$")


def _norm(tokens: Sequence[str]) -> tuple[str, ...]:
    return tuple(t.lower() for t in tokens if not _PUNCT.match(t))


def _sentences(tokens: list[str]) -> list[list[str]]:
    out, cur = [], []
    for t in tokens:
        cur.append(t)
        if t in SENTENCE_END:
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out


def _dedupe_clauses(sent: list[str]) -> list[str]:
    end = [sent[-1]] if sent and sent[-1] in SENTENCE_END else []
    body = sent[:len(sent) - len(end)]
    # alternate separator runs and clauses: sep0 clause0 sep1 clause1 ...
    pieces: list[tuple[list[str], list[str]]] = []
    sep, clause = [], []
    for t in body:
        if t.lower() in COORDINATORS:
            if clause:
                pieces.append((sep, clause))
                sep, clause = [], []
            sep.append(t)
        else:
            clause.append(t)
    pieces.append((sep, clause))
    seen, out = set(), []
    for sep, clause in pieces:
        key = _norm(clause)
        if key and key in seen:
            continue
        seen.add(key)
        out += sep + clause
    return out + end


def postprocess(text: str) -> str:
    """Drop repeated coordinated clauses within a sentence, then repeated sentences."""
    kept, seen = [], set()
    for sent in _sentences(text.split()):
        sent = _dedupe_clauses(sent)
        key = _norm(sent)
        if key in seen:
            continue
        seen.add(key)
        kept.append(" ".join(sent))
    return " ".join(s for s in kept if s)


# ---------------------------------------------------------------------- BLEU

BLEU_EPS = 1e-9


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(candidates: Sequence[str], references: Sequence[str], max_n: int = 4):
    matches, totals = [0] * max_n, [0] * max_n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c, r = cand.split(), ref.split()
        c_len += len(c)
        r_len += len(r)
        for n in range(1, max_n + 1):
            cn, rn = _ngrams(c, n), _ngrams(r, n)
            matches[n - 1] += sum(min(k, rn[g]) for g, k in cn.items())
            totals[n - 1] += max(0, len(c) - n + 1)
    return matches, totals, c_len, r_len


def bleu(candidates: Sequence[str], references: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100] with epsilon smoothing of zero n-gram matches."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("BLEU of an empty corpus is undefined")
    matches, totals, c_len, r_len = bleu_stats(candidates, references, max_n)
    if c_len == 0:
        return 0.0
    # orders with no candidate n-grams anywhere in the corpus are left out of the mean
    logs = [math.log(max(m, BLEU_EPS) / t) for m, t in zip(matches, totals) if t]
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return 100.0 * bp * math.exp(sum(logs) / len(logs))


# ------------------------------------------------------------ model drivers


def decode_instance(model, inst, beam_size: int = 4, max_len: int = 250) -> tuple[list[str], BeamResult]:
    """Decode one preprocessed instance; returns output units (entity units stay atomic)."""
    sess = model.session(inst)
    if beam_size == 1:
        res = greedy_decode(sess.log_probs, sess.initial_state(), sess.bos, sess.eos, max_len)
    else:
        res = beam_search(sess.log_probs, sess.reorder, sess.initial_state(), sess.bos, sess.eos,
                          beam_size, max_len)
    if not res.finished:
        log.warning("no hypothesis finished within %d steps; returning best partial", max_len)
    return [sess.strings[i] for i in res.tokens if i != sess.eos], res


def generate_text(model, inst, beam_size: int = 4, max_len: int = 250, prune: bool = True) -> str:
    units, _ = decode_instance(model, inst, beam_size, max_len)
    text = " ".join(units)
    return postprocess(text) if prune else text
