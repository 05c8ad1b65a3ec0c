"""Recurrent and attention building blocks shared across the model and the entity embedder."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore


def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor, mask=None) -> Tensor:
    """One LSTM step; returns ``[h' | c']`` of shape (B, 2H).

    Gate order in ``W``/``b`` is input, forget, output, candidate. Rows where
    ``mask`` is 0 carry ``h``/``c`` through unchanged.
    """
    H = h.shape[-1]
    xh = np.concatenate([x.data, h.data], axis=-1)
    z = xh @ W.data + b.data
    i, f, o = _sig(z[:, :H]), _sig(z[:, H:2 * H]), _sig(z[:, 2 * H:3 * H])
    u = np.tanh(z[:, 3 * H:])
    c_new = f * c.data + i * u
    tc = np.tanh(c_new)
    h_new = o * tc
    m = None if mask is None else np.asarray(mask, dtype=np.float64).reshape(-1, 1)
    if m is not None:
        h_out = m * h_new + (1 - m) * h.data
        c_out = m * c_new + (1 - m) * c.data
    else:
        h_out, c_out = h_new, c_new

    def fn(g):
        gh, gc = g[:, :H], g[:, H:]
        if m is not None:
            gh_new, gc_new = gh * m, gc * m
            gh_pass, gc_pass = gh * (1 - m), gc * (1 - m)
        else:
            gh_new, gc_new, gh_pass, gc_pass = gh, gc, 0.0, 0.0
        dc = gc_new + gh_new * o * (1 - tc * tc)
        dz = np.concatenate([
            dc * u * i * (1 - i),
            dc * c.data * f * (1 - f),
            gh_new * tc * o * (1 - o),
            dc * i * (1 - u * u),
        ], axis=-1)
        dxh = dz @ W.data.T
        dW = xh.T @ dz
        db = dz.sum(axis=0)
        In = x.shape[-1]
        return dxh[:, :In], dxh[:, In:] + gh_pass, dc * f + gc_pass, dW, db

    return ad._emit(np.concatenate([h_out, c_out], axis=-1), (x, h, c, W, b), fn)


def init_lstm(ps: ParamStore, prefix: str, n_in: int, n_hidden: int) -> None:
    ps.xavier(f"{prefix}.W", (n_in + n_hidden, 4 * n_hidden))
    ps.zeros(f"{prefix}.b", (4 * n_hidden,))


def init_birnn(ps: ParamStore, prefix: str, n_in: int, n_out: int) -> None:
    if n_out % 2:
        raise ValueError(f"BiRNN output width must be even, got {n_out}")
    init_lstm(ps, f"{prefix}.fwd", n_in, n_out // 2)
    init_lstm(ps, f"{prefix}.bwd", n_in, n_out // 2)


def birnn(ps: ParamStore, prefix: str, x: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Bidirectional LSTM over right-padded sequences.

    ``x`` is (B, L, D) and ``mask`` (B, L). Returns per-position states
    (B, L, 2H) and the final states ``[fwd_last | bwd_first]`` (B, 2H).
    """
    B, L, _ = x.shape
    Wf, bf = ps[f"{prefix}.fwd.W"], ps[f"{prefix}.fwd.b"]
    Wb, bb = ps[f"{prefix}.bwd.W"], ps[f"{prefix}.bwd.b"]
    H = bf.shape[0] // 4
    zero = Tensor(np.zeros((B, H)))
    mask = np.asarray(mask, dtype=np.float64)

    fwd = []
    h = c = zero
    for t in range(L):
        hc = lstm_cell(x[:, t, :], h, c, Wf, bf, mask[:, t])
        h, c = hc[:, :H], hc[:, H:]
        fwd.append(h)
    h_last_f = h
    bwd = [None] * L
    h = c = zero
    for t in reversed(range(L)):
        hc = lstm_cell(x[:, t, :], h, c, Wb, bb, mask[:, t])
        h, c = hc[:, :H], hc[:, H:]
        bwd[t] = h
    states = ad.concat([ad.stack(fwd, axis=1), ad.stack(bwd, axis=1)], axis=-1)
    return states, ad.concat([h_last_f, h], axis=-1)


def init_attention(ps: ParamStore, prefix: str, q_dim: int, k_dim: int, v_dim: int, d: int,
                   heads: int, values: bool = True) -> None:
    """Per-head query/key maps to ``d`` dims; value maps to ``v_dim / heads`` per head."""
    ps.xavier(f"{prefix}.wq", (q_dim, heads * d))
    ps.xavier(f"{prefix}.wk", (k_dim, heads * d))
    if values:
        if v_dim % heads:
            raise ValueError(f"value width {v_dim} not divisible by {heads} heads")
        ps.xavier(f"{prefix}.wv", (k_dim, v_dim))


def project_keys(ps: ParamStore, prefix: str, mem: Tensor, heads: int) -> tuple[Tensor, Tensor | None]:
    """Precompute transposed keys (B, N, d, n) and values (B, N, n, v/N) for memory (B, n, k)."""
    B, n, _ = mem.shape
    wk = ps[f"{prefix}.wk"]
    d = wk.shape[1] // heads
    keys = ad.transpose((mem @ wk).reshape(B, n, heads, d), (0, 2, 3, 1))
    vals = None
    if f"{prefix}.wv" in ps:
        wv = ps[f"{prefix}.wv"]
        vals = ad.transpose((mem @ wv).reshape(B, n, heads, wv.shape[1] // heads), (0, 2, 1, 3))
    return keys, vals


def attend(ps: ParamStore, prefix: str, q: Tensor, keys: Tensor, mask, heads: int,
           scale_dim: int, vals: Tensor | None = None, drop: float = 0.0, training: bool = False,
           rng=None) -> tuple[Tensor, Tensor | None]:
    """Multi-head scaled dot-product attention of queries (B, m, q) over precomputed keys.

    ``mask`` broadcasts to (B, N, m, n). Returns the attention weights
    (B, N, m, n) and, if ``vals`` is given, the head-concatenated read-out (B, m, v).
    """
    B, m, _ = q.shape
    wq = ps[f"{prefix}.wq"]
    d = wq.shape[1] // heads
    qh = ad.transpose((q @ wq).reshape(B, m, heads, d), (0, 2, 1, 3))
    logits = (qh @ keys) * (1.0 / math.sqrt(scale_dim))
    alpha = ad.masked_softmax(logits, mask)
    if vals is None:
        return alpha, None
    a = ad.dropout(alpha, drop, training, rng)
    out = a @ vals  # (B, N, m, v/N)
    out = ad.transpose(out, (0, 2, 1, 3)).reshape(B, m, vals.shape[-1] * heads)
    return alpha, out
