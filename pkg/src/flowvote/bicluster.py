"""Weighted flow/feature bipartite graph and greedy minimum-degree peeling.

The graph has one vertex per flow (matrix row) and one per feature (matrix
column); edge ``(i, j)`` exists when ``a_ij > 0`` and carries that weight.
Peeling repeatedly deletes the vertex of smallest weighted degree. The
flows that survive form the anomalous bi-cluster.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameter, NonNegativityViolation, UnknownVertex
from .pqueue import IndexedMinHeap

FLOW = "flow"
FEATURE = "feature"
_KIND_ORDER = {FLOW: 0, FEATURE: 1}

THRESHOLD_STOP = "threshold-stop"
BEST_SCORE = "best-score"
PEEL_MODES = (THRESHOLD_STOP, BEST_SCORE)


class Vertex(NamedTuple):
    kind: str
    index: int


class BipartiteGraph:
    """Flow vertices and feature vertices joined by positive-weight edges.

    The graph keeps a retained flag and a cached weighted degree per vertex,
    so it can be shrunk in place by :meth:`delete`.
    """

    def __init__(self, weights: np.ndarray, flow_ids: Sequence[str] | None = None,
                 feature_names: Sequence[str] | None = None):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2:
            raise InvalidParameter("weights must be a 2-D array")
        if np.any(~np.isfinite(weights)):
            raise InvalidParameter("weights must be finite")
        negative = np.argwhere(weights < 0)
        if len(negative):
            i, j = negative[0]
            raise NonNegativityViolation(
                f"entry ({i}, {j}) is {weights[i, j]!r}; edge weights must be >= 0")
        n, m = weights.shape
        self.weights = weights
        self.flow_ids = list(flow_ids) if flow_ids is not None else [str(i) for i in range(n)]
        self.feature_names = (list(feature_names) if feature_names is not None
                              else [f"f{j}" for j in range(m)])
        if len(self.flow_ids) != n or len(self.feature_names) != m:
            raise InvalidParameter("labels do not match the weight matrix shape")
        self._flow_nbrs = [np.flatnonzero(weights[i]) for i in range(n)]
        self._feature_nbrs = [np.flatnonzero(weights[:, j]) for j in range(m)]
        self.flow_alive = np.ones(n, dtype=bool)
        self.feature_alive = np.ones(m, dtype=bool)
        self.flow_degree = weights.sum(axis=1)
        self.feature_degree = weights.sum(axis=0)

    @property
    def n_flows(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(self.weights))

    def num_nodes(self) -> int:
        return int(self.flow_alive.sum() + self.feature_alive.sum())

    def vertices(self) -> list[Vertex]:
        """Retained vertices, flows first, each group in index order."""
        return ([Vertex(FLOW, int(i)) for i in np.flatnonzero(self.flow_alive)]
                + [Vertex(FEATURE, int(j)) for j in np.flatnonzero(self.feature_alive)])

    def contains(self, v: Vertex) -> bool:
        kind, idx = v
        if kind == FLOW:
            return 0 <= idx < self.n_flows and bool(self.flow_alive[idx])
        if kind == FEATURE:
            return 0 <= idx < self.n_features and bool(self.feature_alive[idx])
        return False

    def degree(self, v: Vertex) -> float:
        """Cached weighted degree (maintained incrementally by :meth:`delete`)."""
        self._check(v)
        return float(self.flow_degree[v.index] if v.kind == FLOW else self.feature_degree[v.index])

    def neighbors(self, v: Vertex) -> list[tuple[Vertex, float]]:
        self._check(v)
        if v.kind == FLOW:
            return [(Vertex(FEATURE, int(j)), float(self.weights[v.index, j]))
                    for j in self._flow_nbrs[v.index] if self.feature_alive[j]]
        return [(Vertex(FLOW, int(i)), float(self.weights[i, v.index]))
                for i in self._feature_nbrs[v.index] if self.flow_alive[i]]

    def delete(self, v: Vertex) -> list[Vertex]:
        """Remove ``v`` and subtract its edge weights from surviving neighbours.

        Returns the neighbours whose degree changed.
        """
        self._check(v)
        touched = []
        if v.kind == FLOW:
            self.flow_alive[v.index] = False
            for j in self._flow_nbrs[v.index]:
                if self.feature_alive[j]:
                    self.feature_degree[j] -= self.weights[v.index, j]
                    touched.append(Vertex(FEATURE, int(j)))
        else:
            self.feature_alive[v.index] = False
            for i in self._feature_nbrs[v.index]:
                if self.flow_alive[i]:
                    self.flow_degree[i] -= self.weights[i, v.index]
                    touched.append(Vertex(FLOW, int(i)))
        return touched

    def copy(self) -> "BipartiteGraph":
        g = BipartiteGraph.__new__(BipartiteGraph)
        g.weights = self.weights
        g.flow_ids = self.flow_ids
        g.feature_names = self.feature_names
        g._flow_nbrs = self._flow_nbrs
        g._feature_nbrs = self._feature_nbrs
        g.flow_alive = self.flow_alive.copy()
        g.feature_alive = self.feature_alive.copy()
        g.flow_degree = self.flow_degree.copy()
        g.feature_degree = self.feature_degree.copy()
        return g

    def vertex_label(self, v: Vertex) -> str:
        return self.flow_ids[v.index] if v.kind == FLOW else self.feature_names[v.index]

    def _check(self, v: Vertex) -> None:
        if not self.contains(v):
            raise UnknownVertex(f"{v} is not a retained vertex of this graph")


@dataclass(frozen=True)
class Subgraph:
    graph: BipartiteGraph = field(repr=False)
    flows: tuple[int, ...]
    features: tuple[int, ...]
    score: float

    @property
    def vertices(self) -> list[Vertex]:
        return [Vertex(FLOW, i) for i in self.flows] + [Vertex(FEATURE, j) for j in self.features]

    @property
    def flow_ids(self) -> list[str]:
        return [self.graph.flow_ids[i] for i in self.flows]

    def edges(self) -> list[tuple[int, int, float]]:
        w = self.graph.weights
        return [(i, j, float(w[i, j])) for i in self.flows for j in self.features if w[i, j] > 0]

    def __len__(self) -> int:
        return len(self.flows) + len(self.features)


@dataclass(frozen=True)
class PeelTrace:
    """Audit record of one peeling run.

    ``scores[k]`` is the minimum weighted degree of the graph after ``k``
    deletions, so ``len(scores) == len(deletions) + 1``.
    """

    deletions: tuple[tuple[Vertex, float], ...]
    scores: tuple[float, ...]
    best_index: int

    def __len__(self) -> int:
        return len(self.deletions)

    def write_csv(self, fh: IO[str], graph: BipartiteGraph | None = None) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "vertex", "kind", "degree", "score"])
        for step, (v, deg) in enumerate(self.deletions, start=1):
            label = graph.vertex_label(v) if graph is not None else str(v.index)
            writer.writerow([step, label, v.kind, repr(deg), repr(self.scores[step])])


def build_bigraph(matrix) -> BipartiteGraph:
    """Graph of a non-negative :class:`~flowvote.features.FeatureMatrix` (or array)."""
    values = getattr(matrix, "values", matrix)
    rows = getattr(matrix, "row_ids", None)
    cols = getattr(matrix, "columns", None)
    return BipartiteGraph(np.asarray(values, dtype=float), rows, cols)


def linkage(graph: BipartiteGraph, vertex: Vertex) -> float:
    """Weighted degree of ``vertex`` over retained neighbours, summed afresh."""
    return math.fsum(w for _, w in graph.neighbors(vertex))


def score(subgraph: Subgraph | BipartiteGraph) -> float:
    """Least linkage over the retained vertices; 0 for an empty subgraph."""
    if isinstance(subgraph, Subgraph):
        g = subgraph.graph.copy()
        keep_f, keep_c = set(subgraph.flows), set(subgraph.features)
        g.flow_alive[:] = [i in keep_f for i in range(g.n_flows)]
        g.feature_alive[:] = [j in keep_c for j in range(g.n_features)]
    else:
        g = subgraph
    verts = g.vertices()
    if not verts:
        return 0.0
    return min(linkage(g, v) for v in verts)


def stop_count(n_vertices: int, threshold: float) -> int:
    """Number of vertices left when threshold-stop peeling halts."""
    # Fraction(str(...)) keeps e.g. 1000 * 0.055 at exactly 55.
    return math.ceil(Fraction(str(threshold)) * n_vertices)


def _key(v: Vertex, degree: float) -> tuple:
    return (degree, v.index, _KIND_ORDER[v.kind])


def peel(graph: BipartiteGraph, threshold: float = 0.055,
         mode: str = THRESHOLD_STOP) -> tuple[Subgraph, list[str], PeelTrace]:
    """Greedy minimum-degree peeling.

    Deletes the minimum-degree vertex (ties: lowest index, then flows before
    features) until at most ``ceil(threshold * |V|)`` vertices remain. In
    ``threshold-stop`` mode the remaining graph is returned; in
    ``best-score`` mode the snapshot with the largest minimum degree seen
    along the way (first one on ties). The input graph is not modified.
    """
    if not 0 < threshold < 1:
        raise InvalidParameter(f"threshold must lie in (0, 1), got {threshold!r}")
    if mode not in PEEL_MODES:
        raise InvalidParameter(f"unknown peel mode {mode!r}")
    g = graph.copy()
    total = g.num_nodes()
    if total == 0:
        raise InvalidParameter("cannot peel an empty graph")
    stop = stop_count(total, threshold)

    heap = IndexedMinHeap({v: _key(v, g.degree(v)) for v in g.vertices()})
    deletions: list[tuple[Vertex, float]] = []
    scores = [heap.peek()[1][0]]
    while len(heap) > stop:
        v, key = heap.pop()
        deletions.append((v, key[0]))
        for u in g.delete(v):
            heap[u] = _key(u, g.degree(u))
        scores.append(heap.peek()[1][0] if len(heap) else 0.0)

    if mode == THRESHOLD_STOP:
        best = len(deletions)
    else:
        best = max(range(len(scores)), key=lambda k: (scores[k], -k))
    removed = {v for v, _ in deletions[:best]}
    flows = tuple(i for i in range(g.n_flows)
                  if graph.flow_alive[i] and Vertex(FLOW, i) not in removed)
    features = tuple(j for j in range(g.n_features)
                     if graph.feature_alive[j] and Vertex(FEATURE, j) not in removed)
    sub = Subgraph(graph, flows, features, scores[best])
    trace = PeelTrace(tuple(deletions), tuple(scores), best)
    return sub, sub.flow_ids, trace


def replay(graph: BipartiteGraph, deletions: Iterable[Vertex]) -> BipartiteGraph:
    """Copy of ``graph`` with ``deletions`` applied in order."""
    g = graph.copy()
    for v in deletions:
        g.delete(v)
    return g
