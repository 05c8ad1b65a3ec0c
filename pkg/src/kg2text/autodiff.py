"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations are recorded only while a :class:`Tape` is active and at least one
input requires a gradient, so inference code can run the same functions with
no bookkeeping overhead.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

LN_EPS = 1e-5

_local = threading.local()  # per-thread stack of active tapes


def _tapes() -> list["Tape"]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class DimensionError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)


class Tape:
    """Ordered record of operations; creation order is a topological order."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Callable]] = []

    def __enter__(self) -> "Tape":
        _tapes().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tapes().pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple, backward_fn: Callable) -> None:
        out._tape = self
        self.records.append((out, inputs, backward_fn))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    tapes = _tapes()
    if tapes and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tapes[-1].record(out, tuple(inputs), backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = tape or loss._tape
    if tape is None or not loss.requires_grad:
        raise ValueError("loss was not recorded on a tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if t._tape is None:
                # leaf: accumulate into the persistent gradient
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _emit(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _emit(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _emit(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _emit(out, (x,), lambda g: (g * 0.5 / out,))


def clamp_min(x: Tensor, lo: float) -> Tensor:
    keep = ~(x.data < lo)  # NaN passes through
    return _emit(np.where(keep, x.data, lo), (x,), lambda g: (g * keep,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _emit(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _emit(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def prelu(x: Tensor, slope) -> Tensor:
    """x where x >= 0, else slope * x; ``slope`` may be a learnable scalar tensor."""
    slope = as_tensor(slope)
    pos = x.data >= 0
    out = np.where(pos, x.data, slope.data * x.data)

    def fn(g):
        gx = np.where(pos, g, g * slope.data)
        gs = _unbroadcast(np.where(pos, 0.0, g * x.data), slope.shape)
        return gx, gs

    return _emit(out, (x, slope), fn)


# ------------------------------------------------------------------ structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _emit(out, (a, b), fn)


def reshape(x: Tensor, shape) -> Tensor:
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    return _emit(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def _is_basic_key(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, slice, type(None), type(Ellipsis))) for k in parts)


def getitem(x: Tensor, key) -> Tensor:
    basic = _is_basic_key(key)

    def fn(g):
        z = np.zeros_like(x.data)
        if basic:
            z[key] += g
        else:
            np.add.at(z, key, g)
        return (z,)

    return _emit(x.data[key], (x,), fn)


def gather_rows(table: Tensor, idx) -> Tensor:
    """``table[idx]`` for an integer array ``idx``; repeated rows accumulate gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    return getitem(table, idx)


def take_last(x: Tensor, idx) -> Tensor:
    """Pick ``x[..., idx[...]]`` along the last axis (``idx`` has x's shape minus last axis)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def fn(g):
        z = np.zeros_like(x.data)
        np.put_along_axis(z, idx[..., None], g[..., None], axis=-1)
        return (z,)

    return _emit(out, (x,), fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return _emit(out, tensors,
                 lambda g: tuple(np.squeeze(p, axis=axis) for p in np.split(g, n, axis=axis)))


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(out, (x,), fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------- composites


def masked_softmax(logits: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax over positions where ``mask`` is true; masked entries are exactly 0.

    An all-false slice yields all zeros.
    """
    z = logits.data
    if mask is None:
        m = np.ones(z.shape, dtype=bool)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
    zm = np.where(m, z, -np.inf)
    top = zm.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(np.where(m, z - top, -np.inf))
    tot = e.sum(axis=axis, keepdims=True)
    out = e / np.where(tot == 0, 1.0, tot)

    def fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (logits,), fn)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    return masked_softmax(logits, None, axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def fn(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _emit(out, (x, gain, bias), fn)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) so inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,))


# ----------------------------------------------------------------- optimiser


def sgd_momentum_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None],
                      velocity: Sequence[np.ndarray], lr: float, momentum: float) -> None:
    """v <- momentum*v - lr*g ; p <- p + v (in place)."""
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    for p, g, v in zip(params, grads, velocity):
        if g is None:
            g = 0.0
        elif g.shape != p.shape or v.shape != p.shape:
            raise DimensionError(f"optimizer shape mismatch: param {p.shape}, grad {g.shape}, "
                                 f"velocity {v.shape}")
        v *= momentum
        v -= lr * g
        p.data += v


# --------------------------------------------------------------- grad checks


def numeric_grad(f: Callable[[], float], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` with respect to ``t.data``."""
    flat = t.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(t.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """||a - n|| / max(||a||, ||n||, floor); zero when both are zero."""
    num = float(np.linalg.norm(analytic - numeric))
    den = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return num / den


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                    h: float = 1e-5) -> dict[str, float]:
    """Relative error per named parameter between tape gradients and finite differences."""
    for p in params.values():
        p.zero_grad()
    with Tape():
        loss = loss_fn()
        backward(loss)
    errors = {}
    for name, p in params.items():
        num = numeric_grad(lambda: float(loss_fn().data), p, h)
        ana = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[name] = relative_error(ana, num)
    return errors
