import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kg2text import decoder as dec
from kg2text.autodiff import Tensor
from kg2text.graph import KnowledgeGraph, prepare_graph
from kg2text.model import make_batch
from kg2text.preprocess import Instance

from conftest import relation_annotation, sampled_grad_errors, small_annotation, tiny_model


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def encoded(variant="graph_transformer", ann=None, seed=0):
    model, insts = tiny_model([ann or relation_annotation()], variant=variant, seed=seed)
    b = make_batch(insts, model.vocab, model.labels)
    return model, insts, b, model.encode(b)


def oracle_context(ps, prefix, h, mem_rows, heads):
    """Loop form of c = h + concat_n sum_j a^n_j W^n v_j."""
    d = len(h)
    WQ, WK, WV = (ps[f"{prefix}.{k}"].data for k in ("wq", "wk", "wv"))
    dv = d // heads
    out = list(h)
    for n in range(heads):
        q = h @ WQ[:, n * d:(n + 1) * d]
        logits = np.array([float(q @ (v @ WK[:, n * d:(n + 1) * d])) / math.sqrt(d)
                           for v in mem_rows])
        a = softmax(logits)
        for c in range(dv):
            out[n * dv + c] += sum(a[j] * float(mem_rows[j] @ WV[:, n * dv + c])
                                   for j in range(len(mem_rows)))
    return np.array(out)


def test_graph_context_hand_oracle():
    model, insts, b, e = encoded(ann=small_annotation())
    assert insts[0].graph.n == 3
    h = np.random.default_rng(0).normal(size=(1, 8))
    cg, alpha = dec.graph_context(model.params, Tensor(h), e.memory)
    want = oracle_context(model.params, "dec.gatt", h[0], e.VL.data[0], 2)
    assert np.abs(cg.data[0] - want).max() < 1e-12
    np.testing.assert_allclose(alpha.data.sum(-1), 1.0, atol=1e-12)


def test_title_context_hand_oracle():
    model, insts, b, e = encoded(ann=small_annotation())
    h = np.random.default_rng(1).normal(size=(1, 8))
    cs, alpha = dec.title_context(model.params, Tensor(h), e.memory)
    want = oracle_context(model.params, "dec.tatt", h[0], e.T.data[0], 2)
    assert np.abs(cs.data[0] - want).max() < 1e-12
    np.testing.assert_allclose(alpha.data.sum(-1), 1.0, atol=1e-12)


def empty_kg():
    return KnowledgeGraph([], [])


def test_single_vertex_graph_attention_is_one():
    model, _ = tiny_model([small_annotation()])
    inst = Instance(["a", "title"], empty_kg(), prepare_graph(empty_kg()))
    b = make_batch([inst], model.vocab, model.labels, with_targets=False)
    e = model.encode(b)
    _, alpha = dec.graph_context(model.params, e.init.h, e.memory)
    np.testing.assert_array_equal(alpha.data.reshape(-1), [1.0, 1.0])


def test_single_title_token_attention_is_one():
    model, _ = tiny_model([small_annotation()])
    inst = Instance(["parsing"], empty_kg(), prepare_graph(empty_kg()))
    b = make_batch([inst], model.vocab, model.labels, with_targets=False)
    e = model.encode(b)
    _, alpha = dec.title_context(model.params, e.init.h, e.memory)
    np.testing.assert_array_equal(alpha.data.reshape(-1), [1.0, 1.0])


# ----------------------------------------------------------------- copy gate


def test_copy_gate_examples():
    model, _ = tiny_model([small_annotation()])
    ps = model.params
    hc = Tensor(np.random.default_rng(0).normal(size=(2, 24)))
    ps["dec.copy.w"].data[...] = 0.0
    ps["dec.copy.b"].data[...] = 0.0
    np.testing.assert_array_equal(dec.copy_gate(ps, hc).data, 0.5)
    ps["dec.copy.b"].data[...] = -50.0
    assert (dec.copy_gate(ps, hc).data < 1e-21).all()
    w = np.linspace(-0.1, 0.1, 24)
    ps["dec.copy.w"].data[:, 0] = w
    ps["dec.copy.b"].data[...] = 0.3
    want = [1 / (1 + math.exp(-(float(row @ w) + 0.3))) for row in hc.data]
    np.testing.assert_allclose(dec.copy_gate(ps, hc).data[:, 0], want, rtol=0, atol=1e-15)


# ------------------------------------------------------------------ mixture


def session_step(model, inst):
    sess = model.session(inst)
    return sess, sess.step(np.array([sess.bos]), sess.initial_state())


def test_forced_copy_puts_all_mass_on_candidates():
    model, insts = tiny_model([relation_annotation()])
    model.params["dec.copy.b"].data[...] = 1e3
    sess, out = session_step(model, insts[0])
    assert out.p[0] == 1.0
    on = np.zeros(sess.n_out, bool)
    on[sess.cand_out] = True
    assert out.mixture[0, ~on].sum() == 0.0
    assert out.mixture[0].sum() == pytest.approx(1.0, abs=1e-12)


def test_forced_vocab_equals_vocab_distribution():
    model, insts = tiny_model([relation_annotation()])
    model.params["dec.copy.b"].data[...] = -1e3
    sess, out = session_step(model, insts[0])
    V = len(model.vocab)
    np.testing.assert_array_equal(out.mixture[0, :V], out.alpha_vocab[0])
    assert out.mixture[0, V:].sum() == 0.0


def test_mixture_probability_examples():
    p = Tensor([[0.25]])
    a_copy = Tensor([[[0.2, 0.3, 0.5]]])
    a_vocab = Tensor([[[0.1, 0.6, 0.3]]])
    none = np.zeros((1, 1, 3), bool)
    got = dec.mixture_probability(p, a_copy, a_vocab, none, np.array([[1]])).data
    assert got[0, 0] == pytest.approx(0.75 * 0.6, abs=1e-15)
    two = np.array([[[True, False, True]]])
    got = dec.mixture_probability(p, a_copy, a_vocab, two, np.array([[2]])).data
    assert got[0, 0] == pytest.approx(0.25 * 0.7 + 0.75 * 0.3, abs=1e-15)
    one = np.array([[[False, True, False]]])
    got = dec.mixture_probability(Tensor([[1.0]]), Tensor([[[0.0, 1.0, 0.0]]]), a_vocab, one,
                                  np.array([[0]])).data
    assert got[0, 0] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_distributions_normalise_on_random_weights(seed):
    model, insts = tiny_model([relation_annotation()], seed=seed)
    sess, out = session_step(model, insts[0])
    assert 0.0 < out.p[0] < 1.0
    for dist in (out.alpha_copy[0], out.alpha_vocab[0], out.mixture[0]):
        assert abs(dist.sum() - 1.0) < 1e-9 and (dist >= 0).all()


def test_unknown_previous_token_maps_to_unk():
    model, insts = tiny_model([relation_annotation()])
    inst = insts[0]
    inst.title = inst.title + ["zzz-unseen"]
    sess = model.session(inst)
    oov = sess.strings.index("zzz-unseen")
    assert oov >= len(model.vocab)
    assert sess.input_row[oov] == model.vocab.unk
    a = sess.step(np.array([oov]), sess.initial_state()).mixture
    b = sess.step(np.array([model.vocab.unk]), sess.initial_state()).mixture
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------- input feeding


def test_input_feeding_sensitivity():
    model, insts, b, e = encoded()
    x = Tensor(np.random.default_rng(0).normal(size=(1, 8)))
    base = dec.step(model.params, x, e.init, e.memory)
    bumped = dec.State(e.init.h, e.init.c, Tensor(e.init.ctx.data + 0.1))
    other = dec.step(model.params, x, bumped, e.memory)
    assert np.abs(base.h.data - other.h.data).max() > 1e-6


def test_initial_state_depends_only_on_global_under_entity_permutation():
    model, insts = tiny_model([relation_annotation()])
    inst = insts[0]
    n = inst.graph.n
    perm = [1, 0] + list(range(2, n))
    a = model.encode(make_batch([inst], model.vocab, model.labels, with_targets=False)).init
    q = Instance(inst.title, inst.kg, inst.graph.permuted(perm))
    b = model.encode(make_batch([q], model.vocab, model.labels, with_targets=False)).init
    assert np.abs(a.h.data - b.h.data).max() < 1e-12
    assert np.abs(a.c.data - b.c.data).max() < 1e-12
    assert (a.ctx.data == 0).all()


# ----------------------------------------------------------------- gradients


@pytest.mark.parametrize("copy", [True, False])
def test_three_step_decode_gradients(copy):
    model, insts = tiny_model([small_annotation()], copy=copy)
    b = make_batch(insts, model.vocab, model.labels)
    assert b.dec_in.shape[1] == 3
    params = {k: v for k, v in model.params.items() if k.startswith("dec.")}
    errs = sampled_grad_errors(lambda: model.loss(b), params, k=6)
    assert max(errs.values()) < 1e-4, errs
