"""Directed influence graphs, edge-weight models and edge-list ingestion."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from twophase_im import _rng

TRIVALENCY_LEVELS = (0.1, 0.01, 0.001)


class GraphFormatError(ValueError):
    """Raised for malformed edge-list input; carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Graph:
    """Immutable directed graph with an influence probability on every edge.

    Nodes are dense integers ``0..n-1``. Edges are stored in insertion order
    (their index is the edge id used by live-graph masks) together with CSR
    indexes for out- and in-neighbours.
    """

    __slots__ = (
        "node_count", "src", "dst", "prob", "labels",
        "out_ptr", "out_dst", "out_eid", "in_ptr", "in_src", "in_eid",
        "_prob_list", "_edge_index",
    )

    def __init__(
        self,
        node_count: int,
        edges: Iterable[Tuple[int, int, float]] = (),
        labels: Optional[Sequence[str]] = None,
    ) -> None:
        edges = list(edges)
        if node_count < 0:
            raise ValueError("node_count must be non-negative")
        seen: Dict[Tuple[int, int], int] = {}
        for i, (u, v, p) in enumerate(edges):
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"edge ({u}, {v}) probability {p} outside [0, 1]")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen[(u, v)] = i
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != node_count:
                raise ValueError("labels must have one entry per node")
        else:
            labels = tuple(str(i) for i in range(node_count))

        self.node_count = node_count
        self.labels = labels
        self.src = np.array([e[0] for e in edges], dtype=np.int64)
        self.dst = np.array([e[1] for e in edges], dtype=np.int64)
        self.prob = np.array([float(e[2]) for e in edges], dtype=np.float64)
        self._prob_list = self.prob.tolist()
        self._edge_index = seen

        out_order = sorted(range(len(edges)), key=lambda e: (edges[e][0], e))
        in_order = sorted(range(len(edges)), key=lambda e: (edges[e][1], e))
        self.out_ptr = _pointers([edges[e][0] for e in out_order], node_count)
        self.out_dst = [edges[e][1] for e in out_order]
        self.out_eid = out_order
        self.in_ptr = _pointers([edges[e][1] for e in in_order], node_count)
        self.in_src = [edges[e][0] for e in in_order]
        self.in_eid = in_order
        for arr in (self.src, self.dst, self.prob):
            arr.flags.writeable = False

    @property
    def edge_count(self) -> int:
        return len(self._prob_list)

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    def edges(self) -> List[Tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self._prob_list))

    def edge_prob(self, u: int, v: int) -> float:
        return self._prob_list[self._edge_index[(u, v)]]

    def edge_id(self, u: int, v: int) -> int:
        return self._edge_index[(u, v)]

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._edge_index

    def out_neighbors(self, u: int) -> List[Tuple[int, float]]:
        lo, hi = self.out_ptr[u], self.out_ptr[u + 1]
        return [(self.out_dst[i], self._prob_list[self.out_eid[i]]) for i in range(lo, hi)]

    def in_neighbors(self, v: int) -> List[Tuple[int, float]]:
        lo, hi = self.in_ptr[v], self.in_ptr[v + 1]
        return [(self.in_src[i], self._prob_list[self.in_eid[i]]) for i in range(lo, hi)]

    def out_degree(self, u: int) -> int:
        return self.out_ptr[u + 1] - self.out_ptr[u]

    def in_degree(self, v: int) -> int:
        return self.in_ptr[v + 1] - self.in_ptr[v]

    def node_id(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown node label {label!r}") from None

    def with_probs(self, probs: Sequence[float]) -> "Graph":
        """New graph with the same topology and edge probabilities ``probs``."""
        if len(probs) != self.edge_count:
            raise ValueError("need one probability per edge")
        edges = [(u, v, float(p)) for (u, v, _), p in zip(self.edges(), probs)]
        return Graph(self.node_count, edges, self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.labels == other.labels
            and self.edges() == other.edges()
        )

    def __hash__(self) -> int:
        return hash((self.node_count, self.labels, tuple(self.edges())))

    def __repr__(self) -> str:
        return f"Graph(nodes={self.node_count}, edges={self.edge_count})"

    def __reduce__(self):
        return (Graph, (self.node_count, self.edges(), self.labels))


def _pointers(keys: List[int], n: int) -> List[int]:
    counts = [0] * (n + 1)
    for k in keys:
        counts[k + 1] += 1
    for i in range(n):
        counts[i + 1] += counts[i]
    return counts


# -- weight models ----------------------------------------------------------


@dataclass(frozen=True)
class WeightModel:
    """How edge probabilities are assigned after loading.

    ``kind`` is one of ``given``, ``wc`` (weighted cascade), ``triv``
    (trivalency, drawn with ``seed``) or ``uniform`` (constant ``p``).
    """

    kind: str = "given"
    p: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("given", "wc", "triv", "uniform"):
            raise ValueError(f"unknown weight model {self.kind!r}")
        if self.kind == "uniform" and not 0.0 <= self.p <= 1.0:
            raise ValueError("uniform probability must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "WeightModel":
        """Parse CLI spellings: ``given``, ``wc``, ``triv``, ``uniform:P``."""
        text = text.strip().lower()
        if text.startswith("uniform:"):
            return cls("uniform", p=float(text.split(":", 1)[1]))
        if text in ("given", "wc", "triv"):
            return cls(text, seed=seed)
        raise ValueError(f"unknown weight model {text!r}")

    def apply(self, graph: Graph) -> Graph:
        if self.kind == "given":
            return graph
        if self.kind == "wc":
            return assign_weighted_cascade(graph)
        if self.kind == "triv":
            return assign_trivalency(graph, self.seed)
        return graph.with_probs([self.p] * graph.edge_count)

    def __str__(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.p!r}"
        if self.kind == "triv":
            return f"triv(seed={self.seed})"
        return self.kind


def assign_weighted_cascade(graph: Graph) -> Graph:
    """Every edge (u, v) gets probability 1 / in_degree(v)."""
    probs = [1.0 / graph.in_degree(v) for v in graph.dst.tolist()]
    return graph.with_probs(probs)


def assign_trivalency(graph: Graph, seed: int) -> Graph:
    """Edge probabilities drawn uniformly from {0.1, 0.01, 0.001}."""
    rng = _rng.generator(seed, _rng.TRIVALENCY_STREAM)
    picks = rng.integers(0, len(TRIVALENCY_LEVELS), size=graph.edge_count)
    return graph.with_probs([TRIVALENCY_LEVELS[i] for i in picks.tolist()])


# -- edge-list text ---------------------------------------------------------


def load_edge_list(
    source: Union[str, os.PathLike, io.TextIOBase, Iterable[str]],
    directed: Union[bool, str] = True,
    weights: Union[WeightModel, str] = "given",
) -> Graph:
    """Read a whitespace-separated ``u v [p]`` edge list.

    ``source`` may be a path, an open text stream or an iterable of lines.
    Node labels are arbitrary tokens numbered in order of first appearance.
    Lines starting with ``#`` are comments; a first line that does not parse
    as an edge is treated as a header and skipped. With ``directed`` false
    (or ``"undirected"``) each line yields both directions.
    """
    if isinstance(directed, str):
        if directed not in ("directed", "undirected"):
            raise ValueError("directed must be 'directed' or 'undirected'")
        directed = directed == "directed"
    if isinstance(weights, str):
        weights = WeightModel.parse(weights)

    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)

    ids: Dict[str, int] = {}
    edges: List[Tuple[int, int, float]] = []
    seen: Dict[Tuple[int, int], int] = {}
    first_data = True

    labels_of: List[str] = []

    def node(tok: str) -> int:
        if tok not in ids:
            ids[tok] = len(ids)
            labels_of.append(tok)
        return ids[tok]

    def add(u: int, v: int, p: float, lineno: int) -> None:
        if (u, v) in seen:
            a, b = labels_of[u], labels_of[v]
            raise GraphFormatError(
                f"duplicate edge {a} -> {b} (first on line {seen[(u, v)]})", lineno
            )
        seen[(u, v)] = lineno
        edges.append((u, v, p))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        is_first, first_data = first_data, False
        if len(toks) not in (2, 3):
            if is_first and not _looks_numeric(toks):
                continue
            raise GraphFormatError(f"expected 'u v [p]', got {len(toks)} tokens", lineno)
        tok_u, tok_v = toks[0], toks[1]
        if len(toks) == 3:
            try:
                p = float(toks[2])
            except ValueError:
                if is_first:
                    continue
                raise GraphFormatError(f"probability {toks[2]!r} is not a number", lineno)
            if not 0.0 <= p <= 1.0:
                raise GraphFormatError(f"probability {p} outside [0, 1]", lineno)
        elif weights.kind == "given":
            raise GraphFormatError("missing probability and weight model is 'given'", lineno)
        else:
            p = 0.0
        if tok_u == tok_v:
            raise GraphFormatError(f"self-loop on {tok_u!r}", lineno)
        u, v = node(tok_u), node(tok_v)
        add(u, v, p, lineno)
        if not directed:
            add(v, u, p, lineno)

    return weights.apply(Graph(len(labels_of), edges, labels_of))


def _looks_numeric(toks: Sequence[str]) -> bool:
    try:
        [float(t) for t in toks]
    except ValueError:
        return False
    return True


def dump_edge_list(graph: Graph) -> str:
    """Inverse of :func:`load_edge_list` for directed graphs with given weights."""
    lab = graph.labels
    out = io.StringIO()
    for u, v, p in graph.edges():
        out.write(f"{lab[u]} {lab[v]} {p!r}\n")
    return out.getvalue()


# -- residual graphs --------------------------------------------------------


@dataclass(frozen=True)
class Residual:
    """Induced subgraph on the surviving nodes of a parent graph.

    ``to_parent[i]`` is the parent id of residual node ``i``. ``boundary``
    maps residual nodes to the probabilities of the edges reaching them from
    removed frontier nodes, which act as external seeds.
    """

    graph: Graph
    to_parent: Tuple[int, ...]
    boundary: Dict[int, Tuple[float, ...]] = field(default_factory=dict)

    @property
    def from_parent(self) -> Dict[int, int]:
        return {p: i for i, p in enumerate(self.to_parent)}

    def boundary_probs(self) -> List[float]:
        """Combined probability that the external sources reach each node."""
        q = [0.0] * self.graph.node_count
        for w, ps in self.boundary.items():
            miss = 1.0
            for p in ps:
                miss *= 1.0 - p
            q[w] = 1.0 - miss
        return q

    def with_source(self) -> Tuple[Graph, int]:
        """Residual graph plus one virtual node standing in for the frontier.

        The virtual node gets an edge to each boundary node with the combined
        probability ``1 - prod(1 - p)``. All frontier nodes activate at the same
        time, so reachability and activation times are preserved.
        """
        g = self.graph
        s = g.node_count
        edges = g.edges()
        for w, q in enumerate(self.boundary_probs()):
            if w in self.boundary:
                edges.append((s, w, q))
        return Graph(s + 1, edges, g.labels + ("<frontier>",)), s


def residual_graph(
    graph: Graph, removed: Iterable[int], frontier: Iterable[int] = ()
) -> Residual:
    """Delete ``removed`` from ``graph``; edges out of ``frontier`` become boundary."""
    removed = set(removed)
    frontier = set(frontier)
    n = graph.node_count
    for v in removed | frontier:
        if not 0 <= v < n:
            raise ValueError(f"unknown node id {v}")
    if not frontier <= removed:
        raise ValueError("frontier must be a subset of the removed nodes")
    keep = [v for v in range(n) if v not in removed]
    index = {v: i for i, v in enumerate(keep)}
    edges = [(index[u], index[v], p) for u, v, p in graph.edges() if u in index and v in index]
    boundary: Dict[int, List[float]] = {}
    for r in sorted(frontier):
        for w, p in graph.out_neighbors(r):
            if w in index:
                boundary.setdefault(index[w], []).append(p)
    labels = [graph.labels[v] for v in keep]
    return Residual(
        Graph(len(keep), edges, labels),
        tuple(keep),
        {w: tuple(ps) for w, ps in sorted(boundary.items())},
    )


def toy_graph() -> Graph:
    """Four-node graph A->B (0.5), B->C (0.8), B->D (0.9)."""
    return load_edge_list(["A B 0.5", "B C 0.8", "B D 0.9"])
