"""Training loop with early stopping, driven by a warm-restart SGD schedule."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .model import PROB_FLOOR, GraphWriter, ModelConfig, make_batch
from .preprocess import Instance, Vocabulary

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr_max: float = 0.25
    lr_min: float = 0.05
    cycle_epochs: int = 5
    momentum: float = 0.9
    max_epochs: int = 15
    batch_size: int = 24
    patience: int | None = 2
    clip_norm: float | None = 1.0
    unk_threshold: int = 5
    seed: int = 0
    stop_below: float | None = None  # stop once teacher-forced train loss drops below this

    def __post_init__(self):
        if not self.lr_max > self.lr_min > 0:
            raise ValueError(f"need lr_max > lr_min > 0, got {self.lr_max}, {self.lr_min}")


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Cosine decay from lr_max to lr_min over ``cycle_epochs`` epochs, then restart."""
    if step < 0:
        raise ValueError("step must be non-negative")
    cycle = max(1, cfg.cycle_epochs * steps_per_epoch)
    if cycle == 1:
        return cfg.lr_max
    w = 0.5 * (1.0 - math.cos(math.pi * (step % cycle) / (cycle - 1)))
    return w * cfg.lr_min + (1.0 - w) * cfg.lr_max


def sequence_loss(probs: Sequence[float] | np.ndarray) -> float:
    """Mean negative log-likelihood of the target-token probabilities of one sequence."""
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < PROB_FLOOR):
        log.warning("clamping %d target probabilities below %g", int((p < PROB_FLOOR).sum()),
                    PROB_FLOOR)
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_loss: float | None
    lrs: list[float] = field(default_factory=list)
    seconds: float = 0.0
    train_eval_loss: float | None = None


@dataclass
class TrainResult:
    model: GraphWriter
    log: list[EpochLog]
    best_epoch: int
    stopped_early: bool


def batches(instances: Sequence[Instance], batch_size: int, rng: np.random.Generator
            ) -> list[list[Instance]]:
    """Shuffle, bucket by target length, chunk into batches, then shuffle batch order."""
    order = rng.permutation(len(instances))
    order = sorted(order, key=lambda i: len(instances[i].target))
    chunks = [[instances[i] for i in order[k:k + batch_size]]
              for k in range(0, len(order), batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def evaluate_loss(model: GraphWriter, instances: Sequence[Instance], batch_size: int = 32) -> float:
    """Teacher-forced loss without dropout, averaged per instance."""
    total = 0.0
    for k in range(0, len(instances), batch_size):
        chunk = instances[k:k + batch_size]
        b = make_batch(chunk, model.vocab, model.labels)
        total += float(model.loss(b).data) * len(chunk)
    return total / max(1, len(instances))


def clip_gradients(params, max_norm: float | None) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and norm > max_norm:
        s = max_norm / (norm + 1e-12)
        for g in grads:
            g *= s
    return norm


def train(model_cfg: ModelConfig, cfg: TrainConfig, train_set: Sequence[Instance],
          valid_set: Sequence[Instance], vocab: Vocabulary, labels: Sequence[str],
          model: GraphWriter | None = None) -> TrainResult:
    if not train_set:
        raise ValueError("empty training split")
    rng = np.random.default_rng(cfg.seed)
    model = model or GraphWriter(model_cfg, vocab, labels, seed=cfg.seed)
    params = model.params.tensors()
    velocity = [np.zeros_like(p.data) for p in params]
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    history: list[EpochLog] = []
    best, best_epoch, bad = math.inf, 0, 0
    best_state = model.params.state_dict()
    step = 0
    stopped_early = False
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.time()
        lrs, losses = [], []
        for chunk in batches(train_set, cfg.batch_size, rng):
            b = make_batch(chunk, vocab, labels)
            model.params.zero_grad()
            with ad.Tape():
                loss = model.loss(b, training=True, rng=rng)
                ad.backward(loss)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, step {step}")
            clip_gradients(params, cfg.clip_norm)
            lr = lr_at(step, steps_per_epoch, cfg)
            ad.sgd_momentum_step(params, [p.grad for p in params], velocity, lr, cfg.momentum)
            lrs.append(lr)
            losses.append(value)
            step += 1
        valid = evaluate_loss(model, valid_set) if valid_set else None
        entry = EpochLog(epoch, float(np.mean(losses)), valid, lrs)
        if cfg.stop_below is not None:
            entry.train_eval_loss = evaluate_loss(model, train_set)
        entry.seconds = time.time() - t0
        history.append(entry)
        log.info("epoch %d train %.4f valid %s (%.1fs)", epoch, entry.train_loss,
                 "-" if valid is None else f"{valid:.4f}", entry.seconds)
        if valid is not None and cfg.patience:
            if valid < best:
                best, best_epoch, bad = valid, epoch, 0
                best_state = model.params.state_dict()
            else:
                bad += 1
                if bad >= cfg.patience:
                    stopped_early = True
                    break
        if entry.train_eval_loss is not None and entry.train_eval_loss < cfg.stop_below:
            break
    if valid_set and cfg.patience:
        model.params.load_state_dict(best_state)
    else:
        best_epoch = history[-1].epoch
    return TrainResult(model, history, best_epoch, stopped_early)
