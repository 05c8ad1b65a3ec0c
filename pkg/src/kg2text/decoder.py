"""Input-feeding LSTM decoder with graph/title attention and a copy/vocabulary mixture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import attend, init_attention, init_lstm, lstm_cell, project_keys
from .params import ParamStore


def init_decoder(ps: ParamStore, d: int, heads: int, n_words: int) -> None:
    ps.xavier("dec.init_h.W", (d, d))
    ps.zeros("dec.init_h.b", (d,))
    ps.xavier("dec.init_c.W", (d, d))
    ps.zeros("dec.init_c.b", (d,))
    init_lstm(ps, "dec.lstm", 3 * d, d)
    init_attention(ps, "dec.gatt", d, d, d, d, heads)
    init_attention(ps, "dec.tatt", d, d, d, d, heads)
    init_attention(ps, "dec.catt", 3 * d, d, d, d, 1, values=False)
    ps.xavier("dec.copy.w", (3 * d, 1))
    ps.zeros("dec.copy.b", (1,))
    ps.xavier("dec.out.W", (3 * d, n_words))
    ps.zeros("dec.out.b", (n_words,))


@dataclass
class Memory:
    """Encodings the decoder attends over, with keys/values projected once."""

    g_keys: Tensor
    g_vals: Tensor
    g_mask: np.ndarray  # (B, 1, 1, n)
    t_keys: Tensor
    t_vals: Tensor
    t_mask: np.ndarray  # (B, 1, 1, m)
    c_keys: Tensor  # (B, 1, d, M)
    c_mask: np.ndarray  # (B, 1, 1, M)
    heads: int

    def select(self, idx) -> "Memory":
        """Memory whose row k is this memory's row idx[k] (used to tile hypotheses)."""
        idx = np.asarray(idx)
        return Memory(self.g_keys[idx], self.g_vals[idx], self.g_mask[idx],
                      self.t_keys[idx], self.t_vals[idx], self.t_mask[idx],
                      self.c_keys[idx], self.c_mask[idx], self.heads)


@dataclass
class State:
    h: Tensor
    c: Tensor
    ctx: Tensor  # [c_g | c_s], (B, 2d)

    def select(self, idx) -> "State":
        idx = np.asarray(idx)
        return State(self.h[idx], self.c[idx], self.ctx[idx])


def build_memory(ps: ParamStore, VL: Tensor, v_mask: np.ndarray, T: Tensor, t_mask: np.ndarray,
                 cands: Tensor, c_mask: np.ndarray, heads: int) -> Memory:
    gk, gv = project_keys(ps, "dec.gatt", VL, heads)
    tk, tv = project_keys(ps, "dec.tatt", T, heads)
    ck, _ = project_keys(ps, "dec.catt", cands, 1)
    return Memory(gk, gv, v_mask[:, None, None, :], tk, tv, t_mask[:, None, None, :],
                  ck, c_mask[:, None, None, :], heads)


def initial_state(ps: ParamStore, global_enc: Tensor) -> State:
    """Affine maps from the global vertex encoding to (h0, cell0); context starts at zero."""
    h = global_enc @ ps["dec.init_h.W"] + ps["dec.init_h.b"]
    c = global_enc @ ps["dec.init_c.W"] + ps["dec.init_c.b"]
    d = h.shape[-1]
    return State(h, c, Tensor(np.zeros((h.shape[0], 2 * d))))


def graph_context(ps: ParamStore, h: Tensor, mem: Memory) -> tuple[Tensor, Tensor]:
    """c_g = h + concat_n sum_j a^n_j W_G^n v_j over all vertices; returns (c_g, weights)."""
    B, d = h.shape
    alpha, out = attend(ps, "dec.gatt", h.reshape(B, 1, d), mem.g_keys, mem.g_mask, mem.heads, d,
                        mem.g_vals)
    return h + out.reshape(B, d), alpha


def title_context(ps: ParamStore, h: Tensor, mem: Memory) -> tuple[Tensor, Tensor]:
    B, d = h.shape
    alpha, out = attend(ps, "dec.tatt", h.reshape(B, 1, d), mem.t_keys, mem.t_mask, mem.heads, d,
                        mem.t_vals)
    return h + out.reshape(B, d), alpha


def step(ps: ParamStore, x: Tensor, state: State, mem: Memory) -> State:
    """Advance the recurrence on ``[x | ctx_{t-1}]`` and recompute the context."""
    d = state.h.shape[-1]
    hc = lstm_cell(ad.concat([x, state.ctx], axis=-1), state.h, state.c,
                   ps["dec.lstm.W"], ps["dec.lstm.b"])
    h, c = hc[:, :d], hc[:, d:]
    cg, _ = graph_context(ps, h, mem)
    cs, _ = title_context(ps, h, mem)
    return State(h, c, ad.concat([cg, cs], axis=-1))


def copy_gate(ps: ParamStore, hc: Tensor) -> Tensor:
    """p = sigmoid(W_copy [h | c] + b_copy); ``hc`` is (..., 3d), result (..., 1)."""
    return ad.sigmoid(hc @ ps["dec.copy.w"] + ps["dec.copy.b"])


def output_distributions(ps: ParamStore, H: Tensor, C: Tensor, mem: Memory
                         ) -> tuple[Tensor, Tensor, Tensor]:
    """For states H (B, T, d) and contexts C (B, T, 2d) return p (B, T), a_copy (B, T, M), a_vocab (B, T, V)."""
    hc = ad.concat([H, C], axis=-1)
    B, T, _ = hc.shape
    d = H.shape[-1]
    p = copy_gate(ps, hc).reshape(B, T)
    a_copy, _ = attend(ps, "dec.catt", hc, mem.c_keys, mem.c_mask, 1, d)
    a_copy = a_copy.reshape(B, T, a_copy.shape[-1])
    a_vocab = ad.softmax(hc @ ps["dec.out.W"] + ps["dec.out.b"])
    return p, a_copy, a_vocab


def mixture_probability(p: Tensor, a_copy: Tensor, a_vocab: Tensor, align: np.ndarray,
                        vocab_id: np.ndarray, vocab_weight: np.ndarray | None = None) -> Tensor:
    """P(target) = p * sum_aligned a_copy + (1 - p) * a_vocab[target].

    ``align`` (B, T, M) marks candidates realising the target; ``vocab_weight``
    (B, T) zeroes the vocabulary term where the target has no vocabulary entry.
    """
    copy_mass = ad.tsum(a_copy * align.astype(np.float64), axis=-1)
    vocab_p = ad.take_last(a_vocab, vocab_id)
    if vocab_weight is not None:
        vocab_p = vocab_p * vocab_weight
    return p * copy_mass + (1.0 - p) * vocab_p

