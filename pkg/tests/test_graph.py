import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kg2text.graph import (Entity, Global, KnowledgeGraph, PreparedGraph, RelationFwd,
                           RelationRev, SchemaError, SciAnnotation, StructureError,
                           collapse_coref, corpus_stats, prepare_graph, unprepare_graph,
                           weakly_connected)

LABELS = ["Compare", "Used-for", "Feature-of", "Hyponym-of", "Evaluate-for", "Conjunction"]


@st.composite
def knowledge_graphs(draw, max_entities=10, max_edges=8):
    E = draw(st.integers(0, max_entities))
    entities = [((f"ent{i}", "x" * draw(st.integers(0, 2))), "Method") for i in range(E)]
    edges = []
    if E >= 2:
        for _ in range(draw(st.integers(0, max_edges))):
            h = draw(st.integers(0, E - 1))
            t = draw(st.integers(0, E - 2))
            t = t + 1 if t >= h else t
            edges.append((h, draw(st.sampled_from(LABELS)), t))
    return KnowledgeGraph(entities, list(dict.fromkeys(edges)))


def ann(mentions, clusters=(), relations=()):
    return SciAnnotation("t".split(), "a".split(), [(tuple(m.split()), "Method") for m in mentions],
                         [list(c) for c in clusters], list(relations))


# ------------------------------------------------------------------ collapse


def test_collapse_identity():
    kg = collapse_coref(ann(["a", "b", "c"], relations=[(0, "Compare", 2)]))
    assert len(kg.entities) == 3 and kg.edges == [(0, "Compare", 2)]


def test_collapse_picks_longest_mention():
    kg = collapse_coref(ann(["HMM", "hidden Markov models"], clusters=[[0, 1]]))
    assert kg.entities == [(("hidden", "Markov", "models"), "Method")]


def test_collapse_tie_breaks():
    # same token count: more characters wins; full tie: first mention wins
    kg = collapse_coref(ann(["ab cd", "abc de"], clusters=[[0, 1]]))
    assert kg.entities[0][0] == ("abc", "de")
    kg = collapse_coref(ann(["ab cd", "xy zw"], clusters=[[1, 0]]))
    assert kg.entities[0][0] == ("ab", "cd")


def test_collapse_drops_self_loops():
    kg = collapse_coref(ann(["HMM", "hidden Markov models", "tagging"], clusters=[[0, 1]],
                            relations=[(0, "Used-for", 1), (1, "Used-for", 2)]))
    assert kg.edges == [(0, "Used-for", 1)]


def test_collapse_merges_equal_phrases_and_dedupes_edges():
    kg = collapse_coref(ann(["crf", "crf", "ner"], relations=[(0, "Used-for", 2), (1, "Used-for", 2)]))
    assert [p for p, _ in kg.entities] == [("crf",), ("ner",)]
    assert kg.edges == [(0, "Used-for", 1)]


@pytest.mark.parametrize("bad", [
    dict(clusters=[[0, 5]]),
    dict(clusters=[[0, 1], [1]]),
    dict(relations=[(0, "Compare", 9)]),
])
def test_collapse_schema_errors(bad):
    with pytest.raises(SchemaError):
        collapse_coref(ann(["a", "b"], **bad))


# ------------------------------------------------------------------- prepare


def test_prepare_empty():
    pg = prepare_graph(KnowledgeGraph([], []))
    assert pg.vertices == [Global()] and pg.adjacency.sum() == 0


def test_prepare_two_entities_one_edge():
    kg = KnowledgeGraph([(("a",), "Task"), (("b",), "Method")], [(0, "Used-for", 1)])
    pg = prepare_graph(kg)
    assert pg.n == 5 and pg.adjacency.sum() == 8
    assert isinstance(pg.vertices[2], RelationFwd) and isinstance(pg.vertices[3], RelationRev)
    expected = {(0, 2), (2, 1), (1, 3), (3, 0), (4, 0), (0, 4), (4, 1), (1, 4)}
    assert set(zip(*np.nonzero(pg.adjacency))) == expected
    assert unprepare_graph(pg).same_as(kg)


def test_figure_style_graph_round_trips():
    # three entities, a chain plus a conjunction
    kg = KnowledgeGraph([((f"v{i}",), "Method") for i in range(4)],
                        [(0, "Used-for", 1), (1, "Feature-of", 2), (3, "Conjunction", 0)])
    assert unprepare_graph(prepare_graph(kg)).same_as(kg)


def test_unprepare_rejects_bad_degrees():
    kg = KnowledgeGraph([(("a",), "Task"), (("b",), "Method")], [(0, "Used-for", 1)])
    pg = prepare_graph(kg)
    adj = pg.adjacency.copy()
    adj[1, 2] = True  # second in-edge into the forward relation vertex
    with pytest.raises(StructureError, match="in-degree 2"):
        unprepare_graph(PreparedGraph(pg.vertices, adj))


@settings(max_examples=200, deadline=None)
@given(knowledge_graphs())
def test_prepare_laws(kg):
    E, R = len(kg.entities), len(kg.edges)
    pg = prepare_graph(kg)
    assert pg.n == E + 2 * R + 1
    assert int(pg.adjacency.sum()) == 4 * R + 2 * E
    assert not pg.adjacency.diagonal().any()
    assert sum(isinstance(v, Global) for v in pg.vertices) == 1
    if E >= 1:
        assert weakly_connected(pg.adjacency)
    assert unprepare_graph(pg).same_as(kg)


@settings(max_examples=50, deadline=None)
@given(knowledge_graphs(), st.randoms(use_true_random=False))
def test_round_trip_is_order_insensitive(kg, r):
    pg = prepare_graph(kg)
    perm = list(range(pg.n))
    r.shuffle(perm)
    assert unprepare_graph(pg.permuted(perm)).same_as(kg)


# --------------------------------------------------------------------- stats


def test_stats_single_instance():
    rep = corpus_stats([ann(["a", "b", "c"], relations=[(0, "Compare", 1)])])
    assert rep.avg_vertices == 4.0 and rep.avg_edges == 1.0
    assert rep.avg_prepared_vertices == 6.0 and rep.avg_prepared_edges == 10.0


def test_stats_empty_dataset():
    rep = corpus_stats([])
    assert rep.instances == 0 and rep.avg_vertices == 0.0 and rep.avg_abstract_length == 0.0
    assert "Avg #Vertices" in rep.format()
