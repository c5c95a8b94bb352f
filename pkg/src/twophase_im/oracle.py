"""Exact evaluation by enumerating every live graph of a small graph.

This is the ground truth the Monte Carlo estimators are tested against:
plain spread, decay-weighted spread and the two-phase objective with an
optimal, greedy or GDD second phase.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

from twophase_im.cascade import DiffusionState, LiveGraph, SeedSchedule, run_schedule
from twophase_im.graph import Graph, residual_graph
from twophase_im.heuristics import TIE_TOL, gdd_select, greedy_select, SelectorConfig

MAX_EDGES = 24
MAX_SUBSETS = 10 ** 6


class EnumerationLimitError(ValueError):
    pass


class SecondPhasePolicy(str, Enum):
    OPTIMAL = "optimal"
    GREEDY = "greedy"
    GDD = "gdd"


@dataclass(frozen=True)
class WorldDistribution:
    graph: Graph
    worlds: Tuple[Tuple[LiveGraph, float], ...]

    def __iter__(self):
        return iter(self.worlds)

    def __len__(self) -> int:
        return len(self.worlds)

    def total(self) -> float:
        return math.fsum(p for _, p in self.worlds)


def _check(graph: Graph, max_edges: int) -> None:
    if graph.edge_count > max_edges:
        raise EnumerationLimitError(
            f"graph has {graph.edge_count} edges; exact enumeration is limited to {max_edges}"
        )


def iter_worlds(graph: Graph, max_edges: int = MAX_EDGES) -> Iterator[Tuple[Tuple[bool, ...], float]]:
    """Yield ``(alive mask, probability)`` for all 2**m edge subsets."""
    _check(graph, max_edges)
    choices = [((False, 1.0 - p), (True, p)) for p in graph.prob.tolist()]
    for combo in itertools.product(*choices):
        prob = 1.0
        for _, q in combo:
            prob *= q
        yield tuple(a for a, _ in combo), prob


def enumerate_worlds(graph: Graph, max_edges: int = MAX_EDGES) -> WorldDistribution:
    return WorldDistribution(
        graph, tuple((LiveGraph(graph, a), p) for a, p in iter_worlds(graph, max_edges))
    )


def exact_expectation(graph: Graph, schedule: SeedSchedule, delta: float = 1.0,
                      max_edges: int = MAX_EDGES) -> float:
    """Expected (decay-weighted) final count of ``schedule`` over all worlds."""
    total = []
    for alive, p in iter_worlds(graph, max_edges):
        if p == 0.0:
            continue
        state = run_schedule(graph, alive, schedule)
        value = state.active_count if delta == 1.0 else state.decay_value(delta)
        total.append(p * value)
    return math.fsum(total)


def exact_sigma(graph: Graph, seeds: Iterable[int], max_edges: int = MAX_EDGES) -> float:
    seeds = frozenset(seeds)
    if not seeds:
        raise ValueError("seeds must be non-empty")
    return exact_expectation(graph, SeedSchedule.single(seeds), 1.0, max_edges)


def exact_decay_sigma(graph: Graph, schedule: SeedSchedule, delta: float,
                      max_edges: int = MAX_EDGES) -> float:
    return exact_expectation(graph, schedule, delta, max_edges)


class ResidualObjective:
    """Exact conditional final count given an observed state.

    Calls take residual node ids (the second-phase candidates) and return
    ``|A| + E[newly reached outside A]`` where the frontier acts as an
    external source.
    """

    def __init__(self, graph: Graph, state: DiffusionState, max_edges: int = MAX_EDGES) -> None:
        active, frontier = state.active_set, state.frontier
        self.residual = residual_graph(graph, active, frontier)
        self.base_count = len(active)
        aug, self.source = self.residual.with_source()
        self._aug = aug
        self._worlds = [(a, p) for a, p in iter_worlds(aug, max_edges) if p > 0.0]

    @property
    def graph(self) -> Graph:
        return self.residual.graph

    def __call__(self, nodes: Sequence[int]) -> float:
        sched = SeedSchedule.single({self.source, *nodes})
        extra = math.fsum(
            p * (run_schedule(self._aug, a, sched).active_count - 1) for a, p in self._worlds
        )
        return self.base_count + extra


@dataclass(frozen=True)
class ObservedGroup:
    """All worlds sharing one observation at time d."""

    state: DiffusionState
    prob: float
    second_phase: Tuple[int, ...]
    value: float


@dataclass(frozen=True)
class TwoPhaseExact:
    value: float
    groups: Tuple[ObservedGroup, ...]
    truncated: bool
    value_by_worlds: float


def choose_second_phase(
    graph: Graph, state: DiffusionState, k2: int, policy: SecondPhasePolicy,
    max_edges: int = MAX_EDGES, max_subsets: int = MAX_SUBSETS,
) -> Tuple[Tuple[int, ...], float, bool]:
    """Second-phase seeds (parent ids), their exact conditional value, truncation flag."""
    policy = SecondPhasePolicy(policy)
    obj = ResidualObjective(graph, state, max_edges)
    res = obj.residual
    n_res = res.graph.node_count
    k = min(k2, n_res)
    if k == 0:
        return (), obj([]), k < k2
    if policy is SecondPhasePolicy.OPTIMAL:
        if math.comb(n_res, k) > max_subsets:
            raise EnumerationLimitError(
                f"C({n_res}, {k}) subsets exceed the limit of {max_subsets}"
            )
        best, best_val = None, -math.inf
        for combo in itertools.combinations(range(n_res), k):
            val = obj(list(combo))
            if best is None or val > best_val + TIE_TOL * max(1.0, abs(best_val)):
                best, best_val = combo, val
        picked = list(best)
    elif policy is SecondPhasePolicy.GREEDY:
        picked = list(greedy_select(res.graph, k, (), obj, SelectorConfig(lazy=False)).members)
    else:
        picked = list(gdd_select(res.graph, k, (), res.boundary).members)
    return tuple(res.to_parent[i] for i in picked), obj(picked), k < k2


def exact_two_phase_detail(
    graph: Graph, s1: Iterable[int], k2: int, d: int,
    policy: SecondPhasePolicy = SecondPhasePolicy.OPTIMAL,
    max_edges: int = MAX_EDGES, max_subsets: int = MAX_SUBSETS,
) -> TwoPhaseExact:
    """Two-phase value with seeds ``s1`` at time 0 and ``k2`` more at time ``d``.

    Worlds are grouped by what is observed at ``d`` (the full activation-time
    map); each group gets one second-phase choice. The value is computed twice:
    from the per-group conditional expectation and directly as the expected
    reach of ``s1`` plus the chosen seeds over all worlds. The two must agree.
    """
    s1 = frozenset(s1)
    if k2 < 0 or d < 0:
        raise ValueError("k2 and d must be non-negative")
    sched = SeedSchedule.single(s1)
    sched.validate_for(graph)
    mass: Dict[DiffusionState, float] = {}
    worlds: List[Tuple[Tuple[bool, ...], float, DiffusionState]] = []
    for alive, p in iter_worlds(graph, max_edges):
        if p == 0.0:
            continue
        y = run_schedule(graph, alive, sched, until=d)
        mass[y] = mass.get(y, 0.0) + p
        worlds.append((alive, p, y))

    groups = []
    choice: Dict[DiffusionState, Tuple[int, ...]] = {}
    truncated = False
    for y in sorted(mass, key=lambda s: s.times):
        s2, val, cut = choose_second_phase(graph, y, k2, policy, max_edges, max_subsets)
        truncated |= cut
        choice[y] = s2
        groups.append(ObservedGroup(y, mass[y], s2, val))
    value = math.fsum(g.prob * g.value for g in groups)

    by_worlds = []
    for alive, p, y in worlds:
        final = run_schedule(graph, alive, SeedSchedule.single(s1 | set(choice[y])))
        by_worlds.append(p * final.active_count)
    value_by_worlds = math.fsum(by_worlds)
    if abs(value - value_by_worlds) > 1e-9 * max(1.0, value):
        raise RuntimeError(
            f"two-phase value mismatch: {value!r} (observed groups) vs {value_by_worlds!r} (worlds)"
        )
    return TwoPhaseExact(value, tuple(groups), truncated, value_by_worlds)


def exact_two_phase(
    graph: Graph, s1: Iterable[int], k2: int, d: int,
    policy: SecondPhasePolicy = SecondPhasePolicy.OPTIMAL,
    max_edges: int = MAX_EDGES, max_subsets: int = MAX_SUBSETS,
) -> float:
    return exact_two_phase_detail(graph, s1, k2, d, policy, max_edges, max_subsets).value


def exact_optimal_s1(
    graph: Graph, k1: int, k2: int, d: int,
    policy: SecondPhasePolicy = SecondPhasePolicy.OPTIMAL,
    max_edges: int = MAX_EDGES, max_subsets: int = MAX_SUBSETS,
) -> Tuple[Tuple[int, ...], float]:
    """Best first-phase set of size ``k1``; ties go to the lexicographically smallest."""
    n = graph.node_count
    if not 1 <= k1 <= n:
        raise ValueError("k1 must lie in [1, node_count]")
    if math.comb(n, k1) > max_subsets:
        raise EnumerationLimitError(f"C({n}, {k1}) subsets exceed the limit of {max_subsets}")
    best, best_val = None, -math.inf
    for combo in itertools.combinations(range(n), k1):
        val = exact_two_phase(graph, combo, k2, d, policy, max_edges, max_subsets)
        if best is None or val > best_val + TIE_TOL * max(1.0, abs(best_val)):
            best, best_val = combo, val
    return best, best_val
