"""IE annotations -> knowledge graphs -> connected unlabeled graphs, plus corpus statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ENTITY_TYPES = ("Task", "Method", "Metric", "Material", "OtherScientificTerm")
RELATION_LABELS = ("Compare", "Used-for", "Feature-of", "Hyponym-of", "Evaluate-for", "Conjunction")


class SchemaError(ValueError):
    pass


class StructureError(ValueError):
    pass


@dataclass
class SciAnnotation:
    title: list[str]
    abstract: list[str]
    entity_mentions: list[tuple[tuple[str, ...], str]]
    coref_clusters: list[list[int]] = field(default_factory=list)
    relations: list[tuple[int, str, int]] = field(default_factory=list)

    def validate(self) -> None:
        n = len(self.entity_mentions)
        seen: set[int] = set()
        for cluster in self.coref_clusters:
            for i in cluster:
                if not 0 <= i < n:
                    raise SchemaError(f"coref mention index {i} out of range (0..{n - 1})")
                if i in seen:
                    raise SchemaError(f"mention {i} appears in more than one coref cluster")
                seen.add(i)
        for h, label, t in self.relations:
            for i in (h, t):
                if not 0 <= i < n:
                    raise SchemaError(f"relation mention index {i} out of range (0..{n - 1})")
        for phrase, _ in self.entity_mentions:
            if not phrase:
                raise SchemaError("empty entity mention")


@dataclass
class KnowledgeGraph:
    entities: list[tuple[tuple[str, ...], str]]
    edges: list[tuple[int, str, int]]

    def canonical(self) -> tuple[frozenset, frozenset]:
        """Entity-order-insensitive form, used for equality up to ordering."""
        names = [p for p, _ in self.entities]
        return (frozenset(self.entities),
                frozenset((names[h], lab, names[t]) for h, lab, t in self.edges))

    def same_as(self, other: "KnowledgeGraph") -> bool:
        return self.canonical() == other.canonical()


@dataclass(frozen=True)
class Entity:
    phrase: tuple[str, ...]
    type: str


@dataclass(frozen=True)
class RelationFwd:
    label: str


@dataclass(frozen=True)
class RelationRev:
    label: str


@dataclass(frozen=True)
class Global:
    pass


@dataclass
class PreparedGraph:
    vertices: list
    adjacency: np.ndarray  # bool, A[i, j] means edge i -> j

    @property
    def n(self) -> int:
        return len(self.vertices)

    def entity_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.vertices) if isinstance(v, Entity)]

    def global_index(self) -> int:
        return next(i for i, v in enumerate(self.vertices) if isinstance(v, Global))

    def permuted(self, perm: Sequence[int]) -> "PreparedGraph":
        """Graph whose vertex k is this graph's vertex perm[k]."""
        perm = np.asarray(perm)
        return PreparedGraph([self.vertices[i] for i in perm],
                             self.adjacency[np.ix_(perm, perm)].copy())


def _mention_rank(phrase: tuple[str, ...]) -> tuple[int, int]:
    return len(phrase), sum(len(w) for w in phrase)


def collapse_coref(a: SciAnnotation) -> KnowledgeGraph:
    """One entity per coref cluster (named by its longest mention) or unclustered mention."""
    return collapse_with_mentions(a)[0]


def collapse_with_mentions(a: SciAnnotation) -> tuple[KnowledgeGraph, list[int]]:
    """Like :func:`collapse_coref`, also returning the entity index of every mention."""
    a.validate()
    n = len(a.entity_mentions)
    group = list(range(n))
    for cluster in a.coref_clusters:
        if cluster:
            root = min(cluster)
            for i in cluster:
                group[i] = root
    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(group[i], []).append(i)

    entities: list[tuple[tuple[str, ...], str]] = []
    index_of_phrase: dict[tuple[str, ...], int] = {}
    mention_to_entity = [0] * n
    for root in sorted(members):
        mids = members[root]
        best = mids[0]
        for i in mids[1:]:
            if _mention_rank(a.entity_mentions[i][0]) > _mention_rank(a.entity_mentions[best][0]):
                best = i
        phrase, etype = a.entity_mentions[best]
        phrase = tuple(phrase)
        if phrase not in index_of_phrase:
            index_of_phrase[phrase] = len(entities)
            entities.append((phrase, etype))
        for i in mids:
            mention_to_entity[i] = index_of_phrase[phrase]

    edges: list[tuple[int, str, int]] = []
    seen = set()
    for h, label, t in a.relations:
        e = (mention_to_entity[h], label, mention_to_entity[t])
        if e[0] == e[2] or e in seen:
            continue
        seen.add(e)
        edges.append(e)
    return KnowledgeGraph(entities, edges), mention_to_entity


def prepare_graph(kg: KnowledgeGraph) -> PreparedGraph:
    """Replace labeled edges by forward/reverse relation vertices and add a global vertex."""
    edges = list(dict.fromkeys(kg.edges))
    n_ent = len(kg.entities)
    n = n_ent + 2 * len(edges) + 1
    vertices: list = [Entity(p, t) for p, t in kg.entities]
    adj = np.zeros((n, n), dtype=bool)
    for h, label, t in edges:
        fwd, rev = len(vertices), len(vertices) + 1
        vertices += [RelationFwd(label), RelationRev(label)]
        adj[h, fwd] = adj[fwd, t] = True
        adj[t, rev] = adj[rev, h] = True
    g = len(vertices)
    vertices.append(Global())
    adj[g, :n_ent] = True
    adj[:n_ent, g] = True
    return PreparedGraph(vertices, adj)


def unprepare_graph(pg: PreparedGraph) -> KnowledgeGraph:
    """Inverse of :func:`prepare_graph` (entities keep their vertex order)."""
    ent_idx = pg.entity_indices()
    pos = {v: k for k, v in enumerate(ent_idx)}
    entities = [(pg.vertices[i].phrase, pg.vertices[i].type) for i in ent_idx]
    adj = pg.adjacency
    fwd_edges, rev_edges = [], []
    for r, v in enumerate(pg.vertices):
        if not isinstance(v, (RelationFwd, RelationRev)):
            continue
        ins = np.flatnonzero(adj[:, r])
        outs = np.flatnonzero(adj[r, :])
        if len(ins) != 1 or len(outs) != 1:
            raise StructureError(f"relation vertex {r} has in-degree {len(ins)}, "
                                 f"out-degree {len(outs)}; expected 1 and 1")
        src, dst = int(ins[0]), int(outs[0])
        if src not in pos or dst not in pos:
            raise StructureError(f"relation vertex {r} is not attached to entity vertices")
        if isinstance(v, RelationFwd):
            fwd_edges.append((pos[src], v.label, pos[dst]))
        else:
            rev_edges.append((pos[dst], v.label, pos[src]))
    if sorted(fwd_edges) != sorted(rev_edges):
        raise StructureError("forward and reverse relation vertices do not pair up")
    return KnowledgeGraph(entities, fwd_edges)


def weakly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 0:
        return True
    und = adj | adj.T
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(und[i] & ~seen):
            seen[j] = True
            stack.append(int(j))
    return bool(seen.all())


@dataclass
class StatsReport:
    instances: int = 0
    title_vocab: int = 0
    abstract_vocab: int = 0
    kg_vocab: int = 0
    title_tokens: int = 0
    abstract_tokens: int = 0
    kg_tokens: int = 0
    entities: int = 0
    avg_title_length: float = 0.0
    avg_abstract_length: float = 0.0
    avg_vertices: float = 0.0  # entities + labeled relations
    avg_edges: float = 0.0  # labeled relations
    avg_prepared_vertices: float = 0.0  # E + 2R + 1
    avg_prepared_edges: float = 0.0  # directed edges after preparation

    def rows(self) -> list[tuple[str, str, str, str]]:
        def f(x):
            return f"{x:.2f}"
        return [
            ("Vocab", str(self.title_vocab), str(self.abstract_vocab), str(self.kg_vocab)),
            ("Tokens", str(self.title_tokens), str(self.abstract_tokens), str(self.kg_tokens)),
            ("Entities", "-", "-", str(self.entities)),
            ("Avg Length", f(self.avg_title_length), f(self.avg_abstract_length), "-"),
            ("Avg #Vertices", "-", "-", f"{f(self.avg_vertices)} (prepared {f(self.avg_prepared_vertices)})"),
            ("Avg #Edges", "-", "-", f"{f(self.avg_edges)} (prepared {f(self.avg_prepared_edges)})"),
        ]

    def format(self) -> str:
        lines = [f"{'':14s}{'Title':>10s}{'Abstract':>10s}  KG"]
        for name, t, a, k in self.rows():
            lines.append(f"{name:14s}{t:>10s}{a:>10s}  {k}")
        return "\n".join(lines)


def corpus_stats(dataset: Iterable[SciAnnotation]) -> StatsReport:
    rep = StatsReport()
    tv, av, kv = set(), set(), set()
    v_tot = e_tot = pv_tot = pe_tot = 0
    for a in dataset:
        kg = collapse_coref(a)
        rep.instances += 1
        tv.update(a.title)
        av.update(a.abstract)
        rep.title_tokens += len(a.title)
        rep.abstract_tokens += len(a.abstract)
        for phrase, _ in kg.entities:
            kv.update(phrase)
            rep.kg_tokens += len(phrase)
        kv.update(lab for _, lab, _ in kg.edges)
        rep.kg_tokens += len(kg.edges)
        E, R = len(kg.entities), len(kg.edges)
        rep.entities += E
        v_tot += E + R
        e_tot += R
        pv_tot += E + 2 * R + 1
        pe_tot += 4 * R + 2 * E
    rep.title_vocab, rep.abstract_vocab, rep.kg_vocab = len(tv), len(av), len(kv)
    if rep.instances:
        n = rep.instances
        rep.avg_title_length = rep.title_tokens / n
        rep.avg_abstract_length = rep.abstract_tokens / n
        rep.avg_vertices = v_tot / n
        rep.avg_edges = e_tot / n
        rep.avg_prepared_vertices = pv_tot / n
        rep.avg_prepared_edges = pe_tot / n
    return rep
