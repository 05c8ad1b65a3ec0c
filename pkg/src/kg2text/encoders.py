"""Vertex/title embedding and the graph encoders (Graph Transformer and the GAT ablation).

All functions work on padded batches: ``V`` is (B, n, d), ``att_mask`` is
(B, n, n) with ``att_mask[b, i, j]`` true when vertex j is an in-neighbour of i.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import attend, birnn, init_attention, init_birnn, project_keys
from .params import ParamStore

ENCODERS = ("graph_transformer", "gat")


def init_encoder(ps: ParamStore, d: int, heads: int, layers: int, ffn: int, n_words: int,
                 n_labels: int, kind: str = "graph_transformer") -> None:
    if kind not in ENCODERS:
        raise ValueError(f"unknown encoder {kind!r}; expected one of {ENCODERS}")
    if d % heads:
        raise ValueError(f"d={d} must be divisible by heads={heads}")
    ps.uniform("emb.word", (n_words, d))
    ps.uniform("emb.rel_fwd", (n_labels, d))
    ps.uniform("emb.rel_rev", (n_labels, d))
    ps.uniform("emb.global", (1, d))
    init_birnn(ps, "phrase", d, d)
    init_birnn(ps, "title", d, d)
    for l in range(layers):
        p = f"enc.{l}"
        init_attention(ps, f"{p}.att", d, d, d, d, heads)
        ps.const(f"{p}.slope", (1,), 0.25)
        if kind == "graph_transformer":
            ps.const(f"{p}.ln1.g", (d,), 1.0)
            ps.zeros(f"{p}.ln1.b", (d,))
            ps.const(f"{p}.ln2.g", (d,), 1.0)
            ps.zeros(f"{p}.ln2.b", (d,))
            ps.xavier(f"{p}.ffn.w1", (d, ffn))
            ps.zeros(f"{p}.ffn.b1", (ffn,))
            ps.xavier(f"{p}.ffn.w2", (ffn, d))
            ps.zeros(f"{p}.ffn.b2", (d,))


def embed_phrases(ps: ParamStore, word_ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """Final forward/backward BiRNN states over each padded phrase -> (P, d)."""
    x = ad.gather_rows(ps["emb.word"], word_ids)
    _, last = birnn(ps, "phrase", x, mask)
    return last


def embed_vertices(ps: ParamStore, phrase_ids: np.ndarray, phrase_mask: np.ndarray,
                   vertex_src: np.ndarray) -> tuple[Tensor, Tensor | None]:
    """Assemble V0 (B, n, d).

    ``vertex_src`` indexes the row table ``[phrases; rel_fwd; rel_rev; global; zero]``,
    so relation vertices with the same label share one embedding.
    """
    d = ps["emb.global"].shape[1]
    parts = []
    phrases = None
    if len(phrase_ids):
        phrases = embed_phrases(ps, phrase_ids, phrase_mask)
        parts.append(phrases)
    parts += [ps["emb.rel_fwd"], ps["emb.rel_rev"], ps["emb.global"], Tensor(np.zeros((1, d)))]
    table = ad.concat(parts, axis=0)
    B, n = vertex_src.shape
    return ad.gather_rows(table, vertex_src.reshape(-1)).reshape(B, n, d), phrases


def attention_head(q: np.ndarray, keys: np.ndarray, mask: np.ndarray, W_Q: np.ndarray,
                   W_K: np.ndarray) -> np.ndarray:
    """Single-head neighbourhood attention weights for one query vector.

    logits_j = (k_j W_K) . (q W_Q) / sqrt(d) over ``keys`` rows where mask is true.
    """
    d = q.shape[-1]
    logits = (np.asarray(keys) @ W_K) @ (np.asarray(q) @ W_Q) / math.sqrt(d)
    return ad.masked_softmax(Tensor(logits), mask).data


def neighbourhood_attention(ps: ParamStore, prefix: str, V: Tensor, att_mask: np.ndarray,
                            heads: int, drop: float, training: bool, rng
                            ) -> tuple[Tensor, Tensor]:
    """Residual multi-head attention over in-neighbours: v_i + concat_n sum_j a_ij W_V^n v_j."""
    d = V.shape[-1]
    keys, vals = project_keys(ps, prefix, V, heads)
    alpha, out = attend(ps, prefix, V, keys, att_mask[:, None, :, :], heads, d, vals,
                        drop, training, rng)
    return V + out, alpha


def graph_transformer_layer(ps: ParamStore, l: int, V: Tensor, att_mask: np.ndarray, heads: int,
                            drop: float = 0.0, training: bool = False, rng=None) -> Tensor:
    p = f"enc.{l}"
    v_hat, _ = neighbourhood_attention(ps, f"{p}.att", V, att_mask, heads, drop, training, rng)
    ln = ad.layer_norm(v_hat, ps[f"{p}.ln1.g"], ps[f"{p}.ln1.b"])
    hidden = ad.prelu(ln @ ps[f"{p}.ffn.w1"] + ps[f"{p}.ffn.b1"], ps[f"{p}.slope"])
    v_prime = hidden @ ps[f"{p}.ffn.w2"] + ps[f"{p}.ffn.b2"]
    return ad.layer_norm(v_prime + ln, ps[f"{p}.ln2.g"], ps[f"{p}.ln2.b"])


def gat_encoder_layer(ps: ParamStore, l: int, V: Tensor, att_mask: np.ndarray, heads: int,
                      drop: float = 0.0, training: bool = False, rng=None) -> Tensor:
    p = f"enc.{l}"
    v_hat, _ = neighbourhood_attention(ps, f"{p}.att", V, att_mask, heads, drop, training, rng)
    return ad.prelu(v_hat, ps[f"{p}.slope"])


def encode_layers(ps: ParamStore, V: Tensor, att_mask: np.ndarray, heads: int, layers: int,
                  kind: str = "graph_transformer", drop: float = 0.0, training: bool = False,
                  rng=None) -> Tensor:
    layer = graph_transformer_layer if kind == "graph_transformer" else gat_encoder_layer
    for l in range(layers):
        V = layer(ps, l, V, att_mask, heads, drop, training, rng)
    return V


def encode_title(ps: ParamStore, title_ids: np.ndarray, title_mask: np.ndarray) -> Tensor:
    """Per-token BiRNN states (B, m, d)."""
    if title_ids.shape[1] == 0:
        raise ValueError("cannot encode an empty title")
    x = ad.gather_rows(ps["emb.word"], title_ids)
    states, _ = birnn(ps, "title", x, title_mask)
    return states
