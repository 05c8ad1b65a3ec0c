import numpy as np
import pytest

from kg2text.graph import SciAnnotation
from kg2text.model import GraphWriter, ModelConfig, make_batch
from kg2text.preprocess import make_instance, preprocess


def small_annotation() -> SciAnnotation:
    """Two entities (three prepared vertices), a 4-token title, a 3-step target."""
    return SciAnnotation(
        title="parsing with neural nets".split(),
        abstract="neural nets help".split(),
        entity_mentions=[(("neural", "nets"), "Method"), (("parsing",), "Task")],
    )


def relation_annotation() -> SciAnnotation:
    return SciAnnotation(
        title="tagging via graph search".split(),
        abstract="graph search is used for tagging .".split(),
        entity_mentions=[(("graph", "search"), "Method"), (("tagging",), "Task")],
        relations=[(0, "Used-for", 1)],
    )


def tiny_model(anns, variant="graph_transformer", copy=True, d=8, heads=2, layers=2, seed=0):
    cfg = ModelConfig(d=d, heads=heads, layers=layers, ffn=2 * d, dropout=0.0, variant=variant,
                      copy=copy)
    vocab, labels, insts = preprocess(anns, threshold=1, keep_relations=cfg.keep_relations)
    model = GraphWriter(cfg, vocab, labels, seed=seed)
    # untrained parameters at 0.1 scale give near-uniform attention; widen them
    rng = np.random.default_rng(seed + 100)
    for t in model.params.tensors():
        t.data[...] = rng.normal(0.0, 0.5, t.shape)
    return model, insts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sampled_grad_errors(loss_fn, params, k=4, h=1e-5, seed=0):
    """Finite differences on ``k`` random coordinates of each tensor (cheap partial check)."""
    from kg2text import autodiff as ad

    for p in params.values():
        p.zero_grad()
    with ad.Tape():
        ad.backward(loss_fn())
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(k, flat.size), replace=False)
        ana = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)[idx]
        num = np.empty(len(idx))
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            num[n] = (fp - fm) / (2 * h)
        errors[name] = ad.relative_error(ana, num)
    return errors


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
