"""Two-phase seeding: k1 seeds at time 0, k2 more at time d after observing.

The second phase works on the residual graph: every node already active at
``d`` is removed, and the nodes activated exactly at ``d`` (the frontier)
become external sources whose untried out-edges still fire. Spread in the
residual counts only new activations; the already-active count is added
back, so totals match expected reach over whole live graphs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from twophase_im import _rng
from twophase_im.cascade import (
    DiffusionState, SeedSchedule, SpreadEstimate, SpreadObjective, WorldSample,
    estimate_decay_spread, resume, run_samples, run_schedule, single_uniforms,
)
from twophase_im.crossentropy import CeParams, ce_select
from twophase_im.graph import Graph, residual_graph
from twophase_im.heuristics import (
    SeedSet, SelectorConfig, gdd_select, greedy_select, weighted_degree_select,
)

PHASE1_ALGS = ("greedy", "ce", "gdd", "wdeg")
PHASE2_ALGS = ("greedy", "ce", "gdd", "wdeg", "optimal")
MODES = ("farsighted", "myopic")


@dataclass(frozen=True)
class TwoPhaseConfig:
    """Sample sizes and seeds used by selection.

    ``mc_samples`` drives the objective estimates behind phase-1 selection,
    ``inner_worlds`` the sampled live graphs behind phase-2 greedy/CE, and
    phase-2 objectives are computed exactly when the residual has at most
    ``exact_edges`` edges.
    """

    mc_samples: int = 500
    master_seed: int = 0
    lazy: bool = True
    workers: int = 1
    inner_worlds: int = 200
    exact_edges: int = 12
    ce: CeParams = field(default_factory=CeParams)

    def selector(self) -> SelectorConfig:
        return SelectorConfig(self.mc_samples, self.master_seed, self.lazy, self.workers)


@dataclass(frozen=True)
class TwoPhasePlan:
    k: int
    k1: int
    k2: int
    d: int
    delta: float = 1.0
    phase1_alg: str = "greedy"
    phase2_alg: str = "gdd"
    mode: str = "farsighted"

    def __post_init__(self) -> None:
        if self.k1 < 1 or self.k2 < 0:
            raise ValueError("need k1 >= 1 and k2 >= 0")
        if self.k1 + self.k2 > self.k:
            raise ValueError("k1 + k2 must not exceed k")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.phase1_alg not in PHASE1_ALGS:
            raise ValueError(f"phase1_alg must be one of {PHASE1_ALGS}")
        if self.phase2_alg not in PHASE2_ALGS:
            raise ValueError(f"phase2_alg must be one of {PHASE2_ALGS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @classmethod
    def split(cls, k: int, k1: int, d: int, **kw) -> "TwoPhasePlan":
        return cls(k=k, k1=k1, k2=k - k1, d=d, **kw)


@dataclass(frozen=True)
class TwoPhaseOutcome:
    s1: SeedSet
    s2: SeedSet
    observed: DiffusionState
    final: DiffusionState
    final_count: int
    timeline: Tuple[int, ...]
    truncated: bool
    meta: Dict[str, float] = field(default_factory=dict, compare=False)

    def cumulative(self) -> List[int]:
        return list(np.cumsum(self.timeline).tolist())


# -- second phase -------------------------------------------------------------


def _second_phase(
    graph: Graph, state: DiffusionState, k2: int, alg: str, config: TwoPhaseConfig
) -> Tuple[int, ...]:
    """Pick ``k2`` seeds outside the active set; returns parent node ids."""
    if k2 == 0:
        return ()
    res = residual_graph(graph, state.active_set, state.frontier)
    rg = res.graph
    if alg == "gdd":
        picked = gdd_select(rg, k2, (), res.boundary).members
    elif alg == "wdeg":
        picked = weighted_degree_select(rg, k2).members
    elif alg == "optimal":
        from twophase_im.oracle import SecondPhasePolicy, choose_second_phase

        return choose_second_phase(graph, state, k2, SecondPhasePolicy.OPTIMAL)[0]
    else:
        objective, sg = _residual_objective(graph, state, res, config)
        cands = range(rg.node_count)
        if alg == "greedy":
            sel = greedy_select(sg, k2, (), objective, replace(config.selector(), lazy=False),
                                candidates=cands)
            picked = sel.members
        else:
            picked = ce_select(rg, k2, objective, config.ce).members
    return tuple(res.to_parent[i] for i in picked)


def _residual_objective(graph, state, res, config):
    """Conditional spread objective over residual ids: exact when small, else sampled worlds."""
    aug, source = res.with_source()
    if aug.edge_count <= config.exact_edges:
        from twophase_im.oracle import ResidualObjective

        return ResidualObjective(graph, state), aug
    return WorldSample(aug, config.inner_worlds, config.master_seed, sources=[source]), aug


def select_phase2(
    graph: Graph, observed: DiffusionState, k2: int, alg: str = "greedy",
    config: Optional[TwoPhaseConfig] = None,
) -> SeedSet:
    """Second-phase seeds maximizing spread of frontier plus new seeds on the residual."""
    if alg not in PHASE2_ALGS:
        raise ValueError(f"alg must be one of {PHASE2_ALGS}")
    free = graph.node_count - len(observed.active_set)
    if k2 > free:
        raise ValueError(f"k2={k2} but only {free} nodes are still inactive")
    return SeedSet(_second_phase(graph, observed, k2, alg, config or TwoPhaseConfig()), k2)


# -- two-phase estimators ---------------------------------------------------------


@dataclass
class TwoPhaseRun:
    """Sample task: one world, observe at d, choose phase 2, run to the end.

    Phase-2 choices depend only on the observation, so they are cached by it.
    """

    s1: Tuple[int, ...]
    k2: int
    d: int
    alg: str
    delta: float = 1.0
    config: TwoPhaseConfig = field(default_factory=TwoPhaseConfig)
    record: bool = False
    _cache: Dict[Tuple[int, ...], Tuple[int, ...]] = field(default_factory=dict, repr=False)

    def choose(self, g: Graph, y: DiffusionState) -> Tuple[int, ...]:
        s2 = self._cache.get(y.times)
        if s2 is None:
            k = min(self.k2, g.node_count - y.active_count)
            s2 = _second_phase(g, y, k, self.alg, self.config)
            self._cache[y.times] = s2
        return s2

    def __call__(self, g: Graph, alive: List[bool], index: int):
        y = run_schedule(g, alive, SeedSchedule.single(self.s1), until=self.d)
        final = resume(g, alive, y, self.choose(g, y))
        value = float(final.active_count) if self.delta == 1.0 else final.decay_value(self.delta)
        if self.record:
            return value, final.timeline()
        return value


def estimate_two_phase(
    graph: Graph, s1: Iterable[int], k2: int, d: int, alg: str, n_samples: int,
    master_seed: int = 0, delta: float = 1.0, config: Optional[TwoPhaseConfig] = None,
    workers: int = 1,
) -> SpreadEstimate:
    s1 = tuple(sorted(set(s1)))
    if not s1:
        raise ValueError("s1 must be non-empty")
    if k2 == 0:
        # no second phase: same per-sample values as the single-phase estimator
        return estimate_decay_spread(graph, s1, delta, n_samples, master_seed, workers)
    task = TwoPhaseRun(s1, k2, d, alg, delta, config or TwoPhaseConfig())
    return SpreadEstimate.from_values(run_samples(graph, task, n_samples, master_seed, workers))


def estimate_h(graph, s1, k2, d, n_samples, master_seed=0, delta=1.0, config=None, workers=1):
    """Expected (decay-weighted) spread when phase 2 is chosen by GDD."""
    return estimate_two_phase(graph, s1, k2, d, "gdd", n_samples, master_seed, delta, config, workers)


def estimate_f(graph, s1, k2, d, n_samples, master_seed=0, delta=1.0, config=None, workers=1):
    """Expected (decay-weighted) spread when phase 2 is chosen greedily."""
    return estimate_two_phase(graph, s1, k2, d, "greedy", n_samples, master_seed, delta, config, workers)


class HObjective:
    """Phase-1 farsighted objective: ``h`` with common random numbers."""

    def __init__(self, graph: Graph, k2: int, d: int, config: TwoPhaseConfig, delta: float = 1.0):
        self.graph, self.k2, self.d, self.config, self.delta = graph, k2, d, config, delta

    def __call__(self, nodes: Sequence[int]) -> float:
        if not nodes:
            return 0.0
        return estimate_h(self.graph, nodes, self.k2, self.d, self.config.mc_samples,
                          self.config.master_seed, self.delta, self.config, self.config.workers).mean


def spread_objective(graph: Graph, config: TwoPhaseConfig, delta: float = 1.0) -> Callable:
    """sigma objective for selection; sampled worlds when they fit in memory."""
    if graph.node_count ** 2 * config.mc_samples * 4 <= 256 * 2 ** 20:
        return WorldSample(graph, config.mc_samples, config.master_seed, delta=delta)
    return SpreadObjective(graph, config.mc_samples, config.master_seed, delta, config.workers)


# -- phase 1 and the full algorithm -----------------------------------------------


def select_phase1(graph: Graph, plan: TwoPhasePlan, config: Optional[TwoPhaseConfig] = None) -> SeedSet:
    """First-phase seeds.

    Farsighted selection maximizes ``h`` (two-phase spread with a GDD second
    phase); myopic selection maximizes single-phase spread. GDD and weighted
    degree ignore the objective, so both modes coincide for them.
    """
    config = config or TwoPhaseConfig()
    alg = plan.phase1_alg
    if alg == "gdd":
        return gdd_select(graph, plan.k1)
    if alg == "wdeg":
        return weighted_degree_select(graph, plan.k1)
    if plan.mode == "farsighted" and plan.k2 > 0:
        objective = HObjective(graph, plan.k2, plan.d, config, plan.delta)
    else:
        objective = spread_objective(graph, config, plan.delta)
    if alg == "greedy":
        return greedy_select(graph, plan.k1, (), objective, config.selector())
    return ce_select(graph, plan.k1, objective, config.ce)


def run_two_phase(
    graph: Graph, plan: TwoPhasePlan, config: Optional[TwoPhaseConfig] = None,
    live_seed: int = 0, s1: Optional[SeedSet] = None,
) -> TwoPhaseOutcome:
    """One realization: select S1, diffuse to d, select S2 on what is seen, finish.

    Pass ``s1`` to reuse a first phase selected once for many realizations.
    """
    config = config or TwoPhaseConfig()
    t0 = time.perf_counter()
    if s1 is None:
        s1 = select_phase1(graph, plan, config)
    t1 = time.perf_counter()
    alive = (single_uniforms(graph, live_seed) < graph.prob).tolist()
    observed = run_schedule(graph, alive, SeedSchedule.single(s1.members), until=plan.d)
    free = graph.node_count - observed.active_count
    k2 = min(plan.k2, free)
    s2 = SeedSet(_second_phase(graph, observed, k2, plan.phase2_alg, config), plan.k2)
    t2 = time.perf_counter()
    final = resume(graph, alive, observed, s2.members)
    return TwoPhaseOutcome(
        s1, s2, observed, final, final.active_count, tuple(final.timeline()), k2 < plan.k2,
        {"phase1_seconds": t1 - t0, "phase2_seconds": t2 - t1},
    )


@dataclass(frozen=True)
class Replication:
    """Average over independent realizations of a plan with a fixed S1."""

    s1: SeedSet
    estimate: SpreadEstimate
    mean_cumulative: Tuple[float, ...]


def replicate_two_phase(
    graph: Graph, plan: TwoPhasePlan, n_samples: int, master_seed: int = 0,
    config: Optional[TwoPhaseConfig] = None, s1: Optional[SeedSet] = None,
    horizon: Optional[int] = None, workers: int = 1,
) -> Replication:
    """Final (decay-weighted) spread and mean cumulative activations per step."""
    config = config or TwoPhaseConfig()
    if s1 is None:
        s1 = select_phase1(graph, plan, config)
    task = TwoPhaseRun(s1.members, plan.k2, plan.d, plan.phase2_alg, plan.delta, config, record=True)
    results = run_samples(graph, task, n_samples, master_seed, workers)
    values = [v for v, _ in results]
    longest = max(len(t) for _, t in results)
    horizon = max(longest, horizon or 0)
    acc = np.zeros(horizon)
    for _, tl in results:
        c = np.cumsum(tl)
        acc[: len(c)] += c
        acc[len(c):] += c[-1]
    return Replication(s1, SpreadEstimate.from_values(values), tuple((acc / n_samples).tolist()))


# -- f versus h ------------------------------------------------------------------


@dataclass(frozen=True)
class PairComparison:
    s: Tuple[int, ...]
    t: Tuple[int, ...]
    f_s: SpreadEstimate
    f_t: SpreadEstimate
    h_s: SpreadEstimate
    h_t: SpreadEstimate

    @property
    def ranks_agree(self) -> bool:
        return np.sign(self.f_t.mean - self.f_s.mean) == np.sign(self.h_t.mean - self.h_s.mean)

    @property
    def ratio_gap(self) -> float:
        return abs(self.h_s.mean / self.h_t.mean - self.f_s.mean / self.f_t.mean)

    @property
    def f_gap_in_se(self) -> float:
        se = math.hypot(self.f_s.std_error, self.f_t.std_error)
        gap = abs(self.f_t.mean - self.f_s.mean)
        return math.inf if se == 0.0 and gap > 0 else (gap / se if se else 0.0)


@dataclass(frozen=True)
class AgreementReport:
    pairs: Tuple[PairComparison, ...]
    attempts: int

    @property
    def rank_agreement(self) -> float:
        return float(np.mean([p.ranks_agree for p in self.pairs])) if self.pairs else math.nan

    @property
    def ratio_gaps(self) -> np.ndarray:
        return np.array([p.ratio_gap for p in self.pairs])

    @property
    def median_ratio_gap(self) -> float:
        return float(np.median(self.ratio_gaps)) if self.pairs else math.nan


class _PairEvaluator:
    def __init__(self, graph, k2, d, config, n_samples):
        self.graph, self.k2, self.d, self.config, self.n = graph, k2, d, config, n_samples
        self.cache: Dict[Tuple[Tuple[int, ...], str], SpreadEstimate] = {}

    def __call__(self, s: Tuple[int, ...], alg: str) -> SpreadEstimate:
        key = (s, alg)
        if key not in self.cache:
            self.cache[key] = estimate_two_phase(
                self.graph, s, self.k2, self.d, alg, self.n, self.config.master_seed,
                config=self.config, workers=self.config.workers,
            )
        return self.cache[key]

    def compare(self, s, t) -> PairComparison:
        s, t = tuple(sorted(s)), tuple(sorted(t))
        return PairComparison(s, t, self(s, "greedy"), self(t, "greedy"), self(s, "gdd"), self(t, "gdd"))


def compare_pair(graph, s, t, k2, d, config: Optional[TwoPhaseConfig] = None) -> PairComparison:
    config = config or TwoPhaseConfig()
    return _PairEvaluator(graph, k2, d, config, config.mc_samples).compare(s, t)


def agreement_diagnostics(
    graph: Graph, k2: int, d: int, n_pairs: int, config: Optional[TwoPhaseConfig] = None,
    set_size: int = 2, min_gap_se: float = 0.0, max_attempts: Optional[int] = None,
) -> AgreementReport:
    """Compare f and h on random pairs of equal-size sets.

    Only pairs whose f values differ by more than ``min_gap_se`` joint
    standard errors are kept; sampling stops after ``n_pairs`` kept pairs or
    ``max_attempts`` draws (default ``20 * n_pairs``).
    """
    config = config or TwoPhaseConfig()
    rng = _rng.generator(config.master_seed, _rng.PAIR_STREAM)
    ev = _PairEvaluator(graph, k2, d, config, config.mc_samples)
    max_attempts = max_attempts or 20 * n_pairs
    kept: List[PairComparison] = []
    attempts = 0
    while len(kept) < n_pairs and attempts < max_attempts:
        attempts += 1
        s = rng.choice(graph.node_count, size=set_size, replace=False).tolist()
        t = rng.choice(graph.node_count, size=set_size, replace=False).tolist()
        if sorted(s) == sorted(t):
            continue
        cmp = ev.compare(s, t)
        if cmp.f_gap_in_se > min_gap_se:
            kept.append(cmp)
    return AgreementReport(tuple(kept), attempts)
