"""Single-phase seed selection: greedy (optionally lazy), GDD and weighted degree.

Every selector accepts a partial seed set that is already committed: those
nodes are never candidates and do not count against ``k``. This is what lets
the same code pick second-phase seeds around the observed frontier.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from twophase_im.graph import Graph

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SeedSet:
    """Ordered distinct seeds. ``scores[i]`` is the value that won pick ``i``."""

    members: Tuple[int, ...]
    budget: int
    scores: Tuple[float, ...] = ()
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError("seed set has duplicates")
        if len(self.members) > self.budget:
            raise ValueError("seed set exceeds its budget")

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def as_set(self) -> frozenset:
        return frozenset(self.members)


@dataclass(frozen=True)
class SelectorConfig:
    mc_samples: int = 1000
    master_seed: int = 0
    lazy: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")


def _winner(gains: Mapping[int, float]) -> int:
    """Smallest id among candidates within TIE_TOL of the best gain."""
    best = max(gains.values())
    return min(v for v, g in gains.items() if g >= best - TIE_TOL * max(1.0, abs(best)))


def greedy_select(
    graph: Graph,
    k: int,
    partial: Iterable[int] = (),
    objective: Optional[Callable[[Sequence[int]], float]] = None,
    config: Optional[SelectorConfig] = None,
    candidates: Optional[Iterable[int]] = None,
) -> SeedSet:
    """Pick ``k`` nodes, each time the one with the largest marginal gain.

    ``objective`` is called with ``partial + chosen + [v]`` (candidate last).
    With ``config.lazy`` gains are kept as stale upper bounds in a heap
    and only re-evaluated when they reach the top (CELF). For a submodular
    objective the result is the same as the exhaustive variant.
    """
    config = config or SelectorConfig()
    if k < 0:
        raise ValueError("k must be non-negative")
    base = list(dict.fromkeys(partial))
    pool = set(range(graph.node_count) if candidates is None else candidates) - set(base)
    if k > len(pool):
        raise ValueError(f"k={k} exceeds the {len(pool)} available candidates")
    if k == 0:
        return SeedSet((), 0)
    if objective is None:
        from twophase_im.cascade import SpreadObjective

        objective = SpreadObjective(graph, config.mc_samples, config.master_seed,
                                    workers=config.workers)

    current = objective(base) if base else 0.0
    chosen: List[int] = []
    scores: List[float] = []
    evaluations = 0

    if not config.lazy:
        for _ in range(k):
            gains = {v: objective(base + chosen + [v]) - current for v in sorted(pool)}
            evaluations += len(gains)
            v = _winner(gains)
            chosen.append(v)
            scores.append(gains[v])
            current += gains[v]
            pool.discard(v)
        return SeedSet(tuple(chosen), k, tuple(scores), {"evaluations": evaluations, "lazy": False})

    heap = []
    for v in sorted(pool):
        heap.append((-(objective(base + [v]) - current), v, 0))
        evaluations += 1
    heapq.heapify(heap)
    for rnd in range(k):
        while True:
            neg, v, stamp = heap[0]
            if stamp == rnd:
                break
            heapq.heapreplace(heap, (-(objective(base + chosen + [v]) - current), v, rnd))
            evaluations += 1
        # refresh everything that could tie with the leader, then apply the tie rule
        top = -heap[0][0]
        fresh: Dict[int, float] = {}
        while heap and -heap[0][0] >= top - TIE_TOL * max(1.0, abs(top)):
            neg, v, stamp = heapq.heappop(heap)
            if stamp != rnd:
                neg = -(objective(base + chosen + [v]) - current)
                evaluations += 1
            fresh[v] = -neg
        v = _winner(fresh)
        for u, g in fresh.items():
            if u != v:
                heapq.heappush(heap, (-g, u, rnd))
        chosen.append(v)
        scores.append(fresh[v])
        current += fresh[v]
    return SeedSet(tuple(chosen), k, tuple(scores), {"evaluations": evaluations, "lazy": True})


def gdd_scores(
    graph: Graph,
    selected: Iterable[int],
    boundary: Optional[Mapping[int, Sequence[float]]] = None,
) -> Dict[int, float]:
    """GDD score of every unselected node.

    score(v) = prod over selected in-neighbours x of (1 - p_xv), times the
    boundary factors, times (1 + sum over unselected out-neighbours y of p_vy).
    """
    sel = set(selected)
    out = {}
    for v in range(graph.node_count):
        if v in sel:
            continue
        keep = 1.0
        for x, p in graph.in_neighbors(v):
            if x in sel:
                keep *= 1.0 - p
        for p in (boundary or {}).get(v, ()):
            keep *= 1.0 - p
        reach = 1.0 + sum(p for y, p in graph.out_neighbors(v) if y not in sel)
        out[v] = keep * reach
    return out


def gdd_select(
    graph: Graph,
    k: int,
    partial: Iterable[int] = (),
    boundary: Optional[Mapping[int, Sequence[float]]] = None,
) -> SeedSet:
    """Generalized degree discount.

    ``partial`` nodes discount their out-neighbours but do not use budget.
    ``boundary`` maps a node to probabilities of edges from external seeds
    outside the graph (a removed frontier). Ties go to the smallest id.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    n = graph.node_count
    selected = [False] * n
    for v in partial:
        selected[v] = True
    free = n - sum(selected)
    if k > free:
        raise ValueError(f"k={k} exceeds the {free} unselected nodes")

    keep = [1.0] * n
    reach = [1.0] * n
    for v in range(n):
        for p in (boundary or {}).get(v, ()):
            keep[v] *= 1.0 - p
        for y, p in graph.out_neighbors(v):
            if not selected[y]:
                reach[v] += p
    for x in range(n):
        if selected[x]:
            for v, p in graph.out_neighbors(x):
                keep[v] *= 1.0 - p

    chosen: List[int] = []
    scores: List[float] = []
    for _ in range(k):
        best = _winner({v: keep[v] * reach[v] for v in range(n) if not selected[v]})
        best_score = keep[best] * reach[best]
        chosen.append(best)
        scores.append(best_score)
        selected[best] = True
        for v, p in graph.out_neighbors(best):
            keep[v] *= 1.0 - p
        for x, p in graph.in_neighbors(best):
            reach[x] -= p
    return SeedSet(tuple(chosen), k, tuple(scores))


def weighted_degree_select(graph: Graph, k: int) -> SeedSet:
    """Top-``k`` nodes by total outgoing probability; near-ties go to the smallest id."""
    if not 0 <= k <= graph.node_count:
        raise ValueError("k must lie in [0, node_count]")
    wdeg = [sum(p for _, p in graph.out_neighbors(v)) for v in range(graph.node_count)]
    left = dict(enumerate(wdeg))
    order = []
    for _ in range(k):
        order.append(_winner(left))
        del left[order[-1]]
    return SeedSet(tuple(order), k, tuple(wdeg[v] for v in order))
