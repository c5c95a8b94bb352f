"""Independent Cascade simulation and Monte Carlo spread estimation.

Time is discrete. A node activated at time ``t`` tries each inactive
out-neighbour once at ``t + 1``. Each run fixes its edge outcomes up front
(one uniform per edge, see :mod:`twophase_im._rng`), so a run is a walk over
one live graph and every edge is tried at most once.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import (
    Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union,
)

import numpy as np

from twophase_im import _rng
from twophase_im.graph import Graph

INACTIVE = -1
Until = Union[int, str, None]


# -- domain types -----------------------------------------------------------


@dataclass(frozen=True)
class LiveGraph:
    """One Bernoulli sample of the edge set: edge ``e`` is alive iff ``alive[e]``."""

    base: Graph
    alive: Tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.alive) != self.base.edge_count:
            raise ValueError("alive mask needs exactly one entry per edge")

    def alive_edges(self) -> List[Tuple[int, int]]:
        g = self.base
        return [(u, v) for (u, v, _), a in zip(g.edges(), self.alive) if a]


@dataclass(frozen=True)
class SeedSchedule:
    """Seeds injected at given times. Times strictly increase; sets are disjoint."""

    entries: Tuple[Tuple[int, FrozenSet[int]], ...]

    def __init__(self, entries: Iterable[Tuple[int, Iterable[int]]] = ()) -> None:
        items = tuple((int(t), frozenset(s)) for t, s in entries)
        for (t0, a), (t1, b) in zip(items, items[1:]):
            if t1 <= t0:
                raise ValueError("schedule times must be strictly increasing")
        seen: set = set()
        for t, s in items:
            if t < 0:
                raise ValueError("schedule times must be non-negative")
            if seen & s:
                raise ValueError("scheduled seed sets must be pairwise disjoint")
            seen |= s
        object.__setattr__(self, "entries", items)

    @classmethod
    def single(cls, seeds: Iterable[int]) -> "SeedSchedule":
        return cls([(0, seeds)])

    @classmethod
    def two_phase(cls, s1: Iterable[int], d: int, s2: Iterable[int]) -> "SeedSchedule":
        s2 = frozenset(s2)
        return cls([(0, s1), (d, s2)] if s2 else [(0, s1)])

    def nodes(self) -> FrozenSet[int]:
        out: FrozenSet[int] = frozenset()
        for _, s in self.entries:
            out |= s
        return out

    def validate_for(self, graph: Graph) -> None:
        for v in self.nodes():
            if not 0 <= v < graph.node_count:
                raise ValueError(f"unknown node id {v}")


@dataclass(frozen=True)
class DiffusionState:
    """Observed diffusion at ``clock``: activation time per node (-1 = inactive)."""

    times: Tuple[int, ...]
    clock: int

    @property
    def active_set(self) -> FrozenSet[int]:
        return frozenset(v for v, t in enumerate(self.times) if t >= 0)

    @property
    def frontier(self) -> FrozenSet[int]:
        return frozenset(v for v, t in enumerate(self.times) if t == self.clock)

    def activation_time(self, v: int) -> Optional[int]:
        t = self.times[v]
        return None if t < 0 else t

    @property
    def active_count(self) -> int:
        return sum(1 for t in self.times if t >= 0)

    def timeline(self) -> List[int]:
        """Number of nodes newly activated at each time ``0..clock``."""
        counts = [0] * (self.clock + 1)
        for t in self.times:
            if t >= 0:
                counts[t] += 1
        return counts

    def decay_value(self, delta: float) -> float:
        return sum(delta ** t for t in self.times if t >= 0)


@dataclass(frozen=True)
class SpreadEstimate:
    mean: float
    std_error: float
    samples: int

    @property
    def degenerate(self) -> bool:
        """True when a single sample gives no error information."""
        return self.samples < 2

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "SpreadEstimate":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("need at least one sample")
        mean = float(arr.mean())
        if arr.size < 2:
            return cls(mean, 0.0, 1)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size))
        return cls(mean, se, int(arr.size))

    def __float__(self) -> float:
        return self.mean


# -- the propagation kernel ---------------------------------------------------


def _propagate(
    g: Graph,
    alive: Sequence[bool],
    times: List[int],
    frontier: List[int],
    clock: int,
    until: Optional[int],
    injections: Mapping[int, Iterable[int]],
) -> Tuple[List[int], int]:
    """Advance the cascade in place; returns the new frontier and clock.

    With ``until=None`` stops at the first step with nothing newly active and
    no pending injection (the frontier is then empty).
    """
    out_ptr, out_dst, out_eid = g.out_ptr, g.out_dst, g.out_eid
    pending = sorted(t for t in injections if t > clock)
    while until is None or clock < until:
        if not frontier:
            pending = [t for t in pending if t > clock]
            if not pending:
                if until is not None:
                    clock = until
                break
            if until is not None and pending[0] > until:
                clock = until
                break
            clock = pending[0] - 1
        clock += 1
        new: List[int] = []
        for u in frontier:
            for i in range(out_ptr[u], out_ptr[u + 1]):
                v = out_dst[i]
                if times[v] < 0 and alive[out_eid[i]]:
                    times[v] = clock
                    new.append(v)
        for v in injections.get(clock, ()):
            if times[v] < 0:
                times[v] = clock
                new.append(v)
        frontier = new
    return frontier, clock


def _start(n: int, schedule: SeedSchedule) -> Tuple[List[int], List[int], Dict[int, FrozenSet[int]]]:
    times = [INACTIVE] * n
    frontier: List[int] = []
    later: Dict[int, FrozenSet[int]] = {}
    for t, seeds in schedule.entries:
        if t == 0:
            for v in sorted(seeds):
                times[v] = 0
                frontier.append(v)
        else:
            later[t] = frozenset(sorted(seeds))
    return times, frontier, later


def run_schedule(
    g: Graph, alive: Sequence[bool], schedule: SeedSchedule, until: Optional[int] = None
) -> DiffusionState:
    """Deterministic cascade over fixed edge outcomes."""
    times, frontier, later = _start(g.node_count, schedule)
    _, clock = _propagate(g, alive, times, frontier, 0, until, later)
    return DiffusionState(tuple(times), clock)


def resume(
    g: Graph,
    alive: Sequence[bool],
    state: DiffusionState,
    extra: Iterable[int] = (),
    until: Optional[int] = None,
) -> DiffusionState:
    """Continue ``state`` over fixed edge outcomes with ``extra`` seeds at ``state.clock``."""
    times = list(state.times)
    frontier = [v for v, t in enumerate(times) if t == state.clock]
    for v in sorted(set(extra)):
        if times[v] >= 0:
            raise ValueError(f"extra seed {v} is already active")
        times[v] = state.clock
        frontier.append(v)
    _, clock = _propagate(g, alive, times, frontier, state.clock, until, {})
    return DiffusionState(tuple(times), clock)


def _until(until: Until) -> Optional[int]:
    if until is None or until == "exhaustion":
        return None
    if isinstance(until, str):
        raise ValueError(f"until must be an integer or 'exhaustion', got {until!r}")
    if until < 0:
        raise ValueError("until must be non-negative")
    return int(until)


def single_uniforms(graph: Graph, sample_seed: int) -> np.ndarray:
    return _rng.generator(sample_seed, _rng.SAMPLE_STREAM, 1 << 40).random(graph.edge_count)


def sample_outcomes(graph: Graph, master_seed: int, index: int) -> List[bool]:
    """Edge outcomes used by sample ``index`` of an estimator run."""
    u = _rng.sample_uniforms(master_seed, index, graph.edge_count)
    return (u < graph.prob).tolist()


# -- public single-run operations -----------------------------------------------


def sample_live_graph(graph: Graph, sample_seed: int) -> LiveGraph:
    alive = single_uniforms(graph, sample_seed) < graph.prob
    return LiveGraph(graph, tuple(alive.tolist()))


def reach(live: LiveGraph, seeds: Iterable[int]) -> Tuple[int, FrozenSet[int]]:
    """Nodes reachable from ``seeds`` over alive edges."""
    g = live.base
    seeds = set(seeds)
    if not seeds:
        raise ValueError("seeds must be non-empty")
    for v in seeds:
        if not 0 <= v < g.node_count:
            raise ValueError(f"unknown node id {v}")
    state = run_schedule(g, live.alive, SeedSchedule.single(seeds))
    reached = state.active_set
    return len(reached), reached


def simulate(
    graph: Graph, schedule: SeedSchedule, until: Until = "exhaustion", sample_seed: int = 0
) -> DiffusionState:
    """One IC run; the state at ``until`` or at exhaustion.

    With a finite ``until`` the returned clock is ``until`` even if the
    cascade died earlier, so later seeds are injected at the right time.
    """
    schedule.validate_for(graph)
    alive = (single_uniforms(graph, sample_seed) < graph.prob).tolist()
    return run_schedule(graph, alive, schedule, _until(until))


def continue_simulation(
    graph: Graph,
    state: DiffusionState,
    extra_seeds: Iterable[int],
    until: Until = "exhaustion",
    sample_seed: int = 0,
) -> DiffusionState:
    """Resume from ``state`` with ``extra_seeds`` activated at ``state.clock``.

    Nodes activated before the clock have already made their attempts; only
    the frontier and the new seeds try their out-edges. Untried edges are
    drawn from ``sample_seed``.
    """
    extra = set(extra_seeds)
    clash = extra & state.active_set
    if clash:
        raise ValueError(f"extra seeds already active: {sorted(clash)}")
    alive = (single_uniforms(graph, sample_seed) < graph.prob).tolist()
    lim = _until(until)
    if lim is not None and lim < state.clock:
        raise ValueError("until lies before the state's clock")
    return resume(graph, alive, state, extra, lim)


# -- Monte Carlo machinery --------------------------------------------------------


def _block_values(graph: Graph, task: Callable, seed: int, block: int, start: int, count: int) -> list:
    rows = _rng.block_rows(graph.edge_count)
    u = _rng.uniform_block(seed, block, rows, graph.edge_count)[:count]
    alive = (u < graph.prob).tolist()
    return [task(graph, a, start + i) for i, a in enumerate(alive)]


def run_samples(
    graph: Graph, task: Callable[[Graph, List[bool], int], Any], n_samples: int,
    master_seed: int, workers: int = 1,
) -> list:
    """Evaluate ``task(graph, alive, index)`` for every sample, in index order.

    ``workers > 1`` fans whole blocks out to processes; the result is
    identical for any worker count.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    chunks = list(_rng.blocks(n_samples, graph.edge_count))
    if workers <= 1 or len(chunks) == 1:
        parts = [_block_values(graph, task, master_seed, b, s, c) for b, s, c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(_block_values, graph, task, master_seed, b, s, c) for b, s, c in chunks
            ]
            parts = [f.result() for f in futs]
    return [x for part in parts for x in part]


@dataclass(frozen=True)
class ScheduleRun:
    """Sample task: final (optionally decay-weighted) count of one schedule."""

    schedule: SeedSchedule
    delta: float = 1.0

    def __call__(self, g: Graph, alive: List[bool], index: int) -> float:
        state = run_schedule(g, alive, self.schedule)
        if self.delta == 1.0:
            return float(state.active_count)
        return state.decay_value(self.delta)


def estimate_spread(
    graph: Graph, schedule: Union[SeedSchedule, Iterable[int]], n_samples: int,
    master_seed: int = 0, workers: int = 1,
) -> SpreadEstimate:
    """Mean final active count over ``n_samples`` independent runs."""
    if not isinstance(schedule, SeedSchedule):
        schedule = SeedSchedule.single(schedule)
    schedule.validate_for(graph)
    values = run_samples(graph, ScheduleRun(schedule), n_samples, master_seed, workers)
    return SpreadEstimate.from_values(values)


def estimate_decay_spread(
    graph: Graph, schedule: Union[SeedSchedule, Iterable[int]], delta: float,
    n_samples: int, master_seed: int = 0, workers: int = 1,
) -> SpreadEstimate:
    """Mean of sum_t delta**t * (newly active at t); ``0**0 == 1``."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if not isinstance(schedule, SeedSchedule):
        schedule = SeedSchedule.single(schedule)
    schedule.validate_for(graph)
    values = run_samples(graph, ScheduleRun(schedule, delta), n_samples, master_seed, workers)
    return SpreadEstimate.from_values(values)


class SpreadObjective:
    """sigma(S) by simulation, with common random numbers across calls."""

    def __init__(self, graph: Graph, n_samples: int, master_seed: int = 0, delta: float = 1.0,
                 workers: int = 1) -> None:
        self.graph = graph
        self.n_samples = n_samples
        self.master_seed = master_seed
        self.delta = delta
        self.workers = workers

    def estimate(self, seeds: Iterable[int]) -> SpreadEstimate:
        return estimate_decay_spread(
            self.graph, SeedSchedule.single(seeds), self.delta, self.n_samples,
            self.master_seed, self.workers,
        )

    def __call__(self, seeds: Iterable[int]) -> float:
        seeds = list(seeds)
        if not seeds:
            return 0.0
        return self.estimate(seeds).mean


# -- sampled live graphs with hop distances -------------------------------------

_UNREACHED = np.iinfo(np.int32).max


class WorldSample:
    """Seed-set spread over ``n_worlds`` sampled live graphs.

    In a live graph the IC activation time of ``v`` is its hop distance from
    the seed set, so plain and decay-weighted spread of any seed set can be
    read off a ``(worlds, n, n)`` tensor: reachability when ``delta == 1``,
    hop distances otherwise. All calls share the same worlds, which keeps
    greedy comparisons low-variance.
    """

    def __init__(self, graph: Graph, n_worlds: int, master_seed: int = 0,
                 sources: Iterable[int] = (), stream: int = 0, delta: float = 1.0) -> None:
        if n_worlds < 1:
            raise ValueError("n_worlds must be at least 1")
        if not 0.0 <= delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        self.graph = graph
        self.delta = delta
        self.n_worlds = n_worlds
        self.sources = tuple(sorted(set(sources)))
        n, m = graph.node_count, graph.edge_count
        u = _rng.generator(master_seed, _rng.INNER_STREAM, stream).random((n_worlds, m))
        alive = u < graph.prob
        if delta == 1.0:
            self.dist = None
            self.reach = reachability(n, graph.src, graph.dst, alive)
            self._combine = np.logical_or
            self._empty = np.zeros((n_worlds, n), dtype=bool)
        else:
            self.dist = hop_distances(n, graph.src, graph.dst, alive)
            self.reach = None
            self._combine = np.minimum
            self._empty = np.full((n_worlds, n), _UNREACHED, dtype=np.int32)
        self._source_rows = self._rows(self.sources) if self.sources else self._empty
        self._cache_key: Optional[tuple] = None
        self._cache_rows: Optional[np.ndarray] = None

    def _rows(self, nodes: Sequence[int]) -> np.ndarray:
        if self.dist is None:
            return self.reach[:, list(nodes), :].any(axis=1)
        return self.dist[:, list(nodes), :].min(axis=1)

    def _table(self, nodes: Sequence[int]) -> np.ndarray:
        nodes = list(nodes)
        if not nodes:
            return self._source_rows
        prefix = tuple(nodes[:-1])
        if prefix == self._cache_key:
            base = self._cache_rows
        else:
            base = self._source_rows
            if prefix:
                base = self._combine(base, self._rows(prefix))
            self._cache_key, self._cache_rows = prefix, base
        return self._combine(base, self._rows(nodes[-1:]))

    def values(self, nodes: Sequence[int]) -> np.ndarray:
        """Per-world (decay-weighted) count of nodes reached from sources and ``nodes``."""
        table = self._table(nodes)
        if self.dist is None:
            return table.sum(axis=1).astype(np.float64)
        hit = table != _UNREACHED
        w = np.where(hit, np.power(self.delta, np.where(hit, table, 0), dtype=np.float64), 0.0)
        return w.sum(axis=1)

    def __call__(self, nodes: Iterable[int]) -> float:
        return float(self.values(list(nodes)).mean())


def _adjacency(n: int, src: np.ndarray, dst: np.ndarray, alive: np.ndarray) -> np.ndarray:
    adj = np.zeros((alive.shape[0], n, n), dtype=np.float32)
    w_idx, e_idx = np.nonzero(alive)
    adj[w_idx, src[e_idx], dst[e_idx]] = 1.0
    return adj


def reachability(n: int, src: np.ndarray, dst: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Boolean transitive closure (reflexive) for a batch of live graphs."""
    adj = _adjacency(n, src, dst, alive)
    reached = np.broadcast_to(np.eye(n, dtype=np.float32), adj.shape).copy()
    for _ in range(n):
        nxt = np.matmul(reached, adj)
        np.minimum(nxt, 1.0, out=nxt)
        np.maximum(nxt, reached, out=nxt)
        if np.array_equal(nxt, reached):
            break
        reached = nxt
    return reached > 0


def hop_distances(n: int, src: np.ndarray, dst: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """All-pairs hop distances for a batch of live graphs (``alive``: worlds x edges)."""
    adj = _adjacency(n, src, dst, alive)
    reached = np.broadcast_to(np.eye(n, dtype=np.float32), adj.shape).copy()
    # a node's distance is the number of expansion rounds it spent unreached
    dist = np.zeros(adj.shape, dtype=np.int32)
    for _ in range(n):
        dist += reached == 0
        nxt = np.matmul(reached, adj)
        np.minimum(nxt, 1.0, out=nxt)
        np.maximum(nxt, reached, out=nxt)
        if np.array_equal(nxt, reached):
            break
        reached = nxt
    dist[reached == 0] = _UNREACHED
    return dist
