"""Baseline feature families: relation bigram counts and per-relation graph
metrics (triangles, core number, greedy colour, PageRank, in/out degree,
weakly connected component id and size).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .ingest import N_RELATIONS, Event

GRAPH_FEATURES = ("triangle_count", "core_number", "color_id", "pagerank",
                  "in_degree", "out_degree", "wcc_id", "wcc_size")
PAGERANK_DAMPING = 0.85
PAGERANK_TOL = 1e-8


# ---------------------------------------------------------------- k-gram

def bigram_index(a: int, b: int, n_relations: int = N_RELATIONS) -> int:
    return (a - 1) * n_relations + (b - 1)


def kgram_features(seq, n_relations: int = N_RELATIONS) -> np.ndarray:
    """Counts of consecutive relation pairs, laid out row-major by (first, second)."""
    items = seq.items if hasattr(seq, "items") else tuple(seq)
    counts = np.zeros(n_relations * n_relations, dtype=np.int64)
    for a, b in zip(items, items[1:]):
        counts[bigram_index(a, b, n_relations)] += 1
    return counts


def kgram_names(n_relations: int = N_RELATIONS) -> list[str]:
    return [f"bigram_{a}_{b}" for a in range(1, n_relations + 1)
            for b in range(1, n_relations + 1)]


# ----------------------------------------------------------------- graphs

@dataclass
class RelationGraph:
    """Directed multigraph of one relation; parallel edges keep a count."""

    relation: int
    edges: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def nodes(self) -> list[int]:
        seen = set()
        for a, b in self.edges:
            seen.add(a)
            seen.add(b)
        return sorted(seen)

    def add(self, src: int, dst: int, count: int = 1) -> None:
        self.edges[(src, dst)] = self.edges.get((src, dst), 0) + count

    def undirected(self) -> dict[int, set[int]]:
        """Simple undirected projection (no self loops)."""
        adj = {v: set() for v in self.nodes}
        for a, b in self.edges:
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
        return adj


def build_relation_graphs(events: Iterable[Event],
                          n_relations: int = N_RELATIONS) -> list[RelationGraph]:
    graphs = [RelationGraph(r) for r in range(1, n_relations + 1)]
    for e in events:
        graphs[e.relation - 1].add(e.src, e.dst)
    for g in graphs:
        g.edges = dict(sorted(g.edges.items()))
    return graphs


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, items=()):
        self.parent = {}
        self.size = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        self.add(x)
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


def triangle_counts(adj: Mapping[int, set]) -> dict[int, int]:
    """Triangles through each node of an undirected simple graph."""
    rank = {v: i for i, v in enumerate(sorted(adj))}
    counts = dict.fromkeys(adj, 0)
    for u in adj:
        higher = [w for w in adj[u] if rank[w] > rank[u]]
        for i, v in enumerate(higher):
            for w in higher[i + 1:]:
                if w in adj[v]:
                    counts[u] += 1
                    counts[v] += 1
                    counts[w] += 1
    return counts


def core_numbers(adj: Mapping[int, set]) -> dict[int, int]:
    """k-core index of each node by repeatedly removing a minimum-degree node."""
    degree = {v: len(adj[v]) for v in adj}
    heap = [(d, v) for v, d in degree.items()]
    heapq.heapify(heap)
    removed = set()
    core = {}
    k = 0
    while heap:
        d, v = heapq.heappop(heap)
        if v in removed or d != degree[v]:
            continue
        k = max(k, d)
        core[v] = k
        removed.add(v)
        for w in adj[v]:
            if w not in removed:
                degree[w] -= 1
                heapq.heappush(heap, (degree[w], w))
    return core


def greedy_coloring(adj: Mapping[int, set]) -> dict[int, int]:
    """Largest-degree-first greedy colouring (ties by node id)."""
    order = sorted(adj, key=lambda v: (-len(adj[v]), v))
    color: dict[int, int] = {}
    for v in order:
        used = {color[w] for w in adj[v] if w in color}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color


def pagerank(graph: RelationGraph, damping: float = PAGERANK_DAMPING,
             tol: float = PAGERANK_TOL, max_iter: int = 1000) -> dict[int, float]:
    """Power iteration with multiplicity-weighted transitions; dangling mass
    is spread uniformly. Stops when the L1 change drops below ``tol``."""
    nodes = graph.nodes
    n = len(nodes)
    if n == 0:
        return {}
    index = {v: i for i, v in enumerate(nodes)}
    src = np.array([index[a] for a, _ in graph.edges], dtype=np.int64)
    dst = np.array([index[b] for _, b in graph.edges], dtype=np.int64)
    w = np.array(list(graph.edges.values()), dtype=float)
    out_w = np.zeros(n)
    np.add.at(out_w, src, w)
    dangling = out_w == 0
    share = w / np.where(out_w[src] > 0, out_w[src], 1.0)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = np.zeros(n)
        np.add.at(nxt, dst, x[src] * share)
        nxt = damping * (nxt + x[dangling].sum() / n) + (1.0 - damping) / n
        nxt /= nxt.sum()
        done = np.abs(nxt - x).sum() < tol
        x = nxt
        if done:
            break
    return {v: float(x[i]) for v, i in index.items()}


def degrees(graph: RelationGraph) -> tuple[dict[int, int], dict[int, int]]:
    """(in_degree, out_degree) counting parallel edges."""
    ins = dict.fromkeys(graph.nodes, 0)
    outs = dict.fromkeys(graph.nodes, 0)
    for (a, b), c in graph.edges.items():
        outs[a] += c
        ins[b] += c
    return ins, outs


def weak_components(graph: RelationGraph) -> tuple[dict[int, int], dict[int, int]]:
    """(component id, component size) per node; ids are 0, 1, ... in order of
    each component's smallest member."""
    uf = UnionFind(graph.nodes)
    for a, b in graph.edges:
        uf.union(a, b)
    roots: dict[int, list[int]] = {}
    for v in graph.nodes:
        roots.setdefault(uf.find(v), []).append(v)
    comps = sorted(roots.values(), key=min)
    cid, csize = {}, {}
    for i, members in enumerate(comps):
        for v in members:
            cid[v] = i
            csize[v] = len(members)
    return cid, csize


def graph_metrics(graph: RelationGraph) -> dict[int, np.ndarray]:
    """The eight per-node metrics of one relation graph."""
    adj = graph.undirected()
    tri = triangle_counts(adj)
    core = core_numbers(adj)
    color = greedy_coloring(adj)
    pr = pagerank(graph)
    ins, outs = degrees(graph)
    cid, csize = weak_components(graph)
    return {v: np.array([tri[v], core[v], color[v], pr[v], ins[v], outs[v],
                         cid[v], csize[v]], dtype=float)
            for v in graph.nodes}


def compute_graph_features(graphs: list[RelationGraph]) -> dict[int, np.ndarray]:
    """56-wide rows (8 metrics for each of the 7 relation graphs) per user
    seen in any graph; blocks of graphs a user is absent from stay zero."""
    width = len(GRAPH_FEATURES)
    per_graph = [graph_metrics(g) for g in graphs]
    users = sorted({v for m in per_graph for v in m})
    rows = {u: np.zeros(width * len(graphs)) for u in users}
    for gi, metrics in enumerate(per_graph):
        for v, vals in metrics.items():
            rows[v][gi * width:(gi + 1) * width] = vals
    return rows


def graph_feature_names(n_relations: int = N_RELATIONS) -> list[str]:
    return [f"r{r}_{name}" for r in range(1, n_relations + 1) for name in GRAPH_FEATURES]
