"""Fully adaptive cross-entropy (FACE) search over seed sets.

Two search spaces are supported: fixed-size seed sets, and the joint space
of (first-phase budget k1, delay d, first-phase set of size k1). The
sampling distribution is updated with the weighted rule: every sample
contributes in proportion to its objective value, so only ratios of values
matter and the search is invariant to rescaling the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from twophase_im import _rng
from twophase_im.cascade import SpreadEstimate
from twophase_im.graph import Graph
from twophase_im.heuristics import SeedSet

Value = Union[float, SpreadEstimate]


@dataclass(frozen=True)
class CeParams:
    """FACE settings. Sample sizes default to ``10*k`` and ``100*k``."""

    sample_size_min: Optional[int] = None
    sample_size_max: Optional[int] = None
    elite_fraction: float = 0.1
    smoothing: float = 0.7
    max_iterations: int = 50
    stall_limit: int = 5
    master_seed: int = 0
    elite_only: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in (0, 1]")
        if self.max_iterations < 1 or self.stall_limit < 1:
            raise ValueError("max_iterations and stall_limit must be positive")
        lo, hi = self.sample_size_min, self.sample_size_max
        if (lo is not None and lo < 1) or (hi is not None and hi < 1):
            raise ValueError("sample sizes must be positive")
        if lo is not None and hi is not None and lo > hi:
            raise ValueError("sample_size_min must not exceed sample_size_max")

    def sizes(self, k: int) -> Tuple[int, int]:
        lo = self.sample_size_min or 10 * max(1, k)
        hi = self.sample_size_max or max(lo, 100 * max(1, k))
        return lo, max(lo, hi)


@dataclass
class CeDistribution:
    """Sampling weights per node plus categoricals over k1 in 1..k and d in 1..D."""

    node_probs: np.ndarray
    k1_probs: np.ndarray = field(default_factory=lambda: np.ones(1))
    d_probs: np.ndarray = field(default_factory=lambda: np.ones(1))

    def check(self) -> None:
        if np.any(self.node_probs < 0.0) or np.any(self.node_probs > 1.0):
            raise AssertionError("node probabilities left [0, 1]")
        for cat in (self.k1_probs, self.d_probs):
            if abs(cat.sum() - 1.0) > 1e-9:
                raise AssertionError("categorical distribution is not normalized")

    def copy(self) -> "CeDistribution":
        return CeDistribution(self.node_probs.copy(), self.k1_probs.copy(), self.d_probs.copy())


@dataclass(frozen=True)
class JointSample:
    k1: int
    d: int
    s1: Tuple[int, ...]
    objective_value: float


@dataclass(frozen=True)
class CeIteration:
    iteration: int
    sample_size: int
    best_value: float
    gamma: float
    best_ever: float
    distribution: CeDistribution
    samples: Tuple[JointSample, ...]


@dataclass
class CeResult:
    best: JointSample
    estimate: Optional[SpreadEstimate]
    history: List[CeIteration]
    evaluations: int


def draw_set(rng: np.random.Generator, weights: np.ndarray, size: int) -> Tuple[int, ...]:
    """Draw ``size`` distinct indices, each draw proportional to the remaining weights.

    Once the remaining weight is exhausted the rest is drawn uniformly from
    the indices not yet taken.
    """
    w = weights.astype(np.float64).copy()
    taken: List[int] = []
    for _ in range(size):
        total = w.sum()
        if total > 0.0:
            cum = np.cumsum(w)
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, int(np.flatnonzero(w > 0.0)[-1]))
        else:
            rest = [i for i in range(len(w)) if i not in taken]
            idx = rest[int(rng.integers(len(rest)))]
        taken.append(idx)
        w[idx] = 0.0
    return tuple(sorted(taken))


def _draw_category(rng: np.random.Generator, probs: np.ndarray) -> int:
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(probs) - 1)


def _as_value(v: Value) -> Tuple[float, Optional[SpreadEstimate]]:
    if isinstance(v, SpreadEstimate):
        return v.mean, v
    return float(v), None


def _optimize(
    n: int,
    k: int,
    D: int,
    joint: bool,
    evaluate: Callable[[int, int, Tuple[int, ...]], Value],
    params: CeParams,
    initial: Optional[CeDistribution],
) -> CeResult:
    n_min, n_max = params.sizes(k)
    if initial is None:
        dist = CeDistribution(
            np.full(n, min(1.0, k / n) if n else 0.0),
            np.full(k if joint else 1, 1.0 / (k if joint else 1)),
            np.full(D if joint else 1, 1.0 / (D if joint else 1)),
        )
    else:
        dist = initial.copy()
    dist.check()

    cache: Dict[Tuple[int, int, FrozenSet[int]], Tuple[float, Optional[SpreadEstimate]]] = {}
    best: Optional[JointSample] = None
    best_est: Optional[SpreadEstimate] = None
    gamma_prev = -math.inf
    history: List[CeIteration] = []
    size = n_min
    stall = 0

    for it in range(params.max_iterations):
        rng = _rng.generator(params.master_seed, _rng.CE_STREAM, it)
        draws = []
        for _ in range(size):
            k1 = _draw_category(rng, dist.k1_probs) + 1 if joint else k
            d = _draw_category(rng, dist.d_probs) + 1 if joint else 0
            draws.append((k1, d, draw_set(rng, dist.node_probs, k1)))
        samples = []
        for k1, d, s1 in draws:
            key = (k1, d, frozenset(s1))
            if key not in cache:
                val, est = _as_value(evaluate(k1, d, s1))
                if val < 0.0 or math.isnan(val):
                    raise ValueError(f"objective returned {val}; the weighted update needs values >= 0")
                cache[key] = (val, est)
            samples.append(JointSample(k1, d, s1, cache[key][0]))

        values = np.array([s.objective_value for s in samples])
        order = sorted(range(len(samples)), key=lambda i: -values[i])
        n_elite = max(1, math.ceil(params.elite_fraction * len(samples)))
        gamma = float(values[order[n_elite - 1]])
        lead = samples[order[0]]
        improved = best is None or lead.objective_value > best.objective_value or gamma > gamma_prev
        if best is None or lead.objective_value > best.objective_value:
            best = lead
            best_est = cache[(lead.k1, lead.d, frozenset(lead.s1))][1]
        gamma_prev = max(gamma_prev, gamma)

        weights = values.copy()
        if params.elite_only:
            weights[order[n_elite:]] = 0.0
        total = weights.sum()
        if total > 0.0:
            a = params.smoothing
            member = np.zeros((len(samples), n))
            for i, s in enumerate(samples):
                member[i, list(s.s1)] = 1.0
            new_nodes = np.clip(member.T @ weights / total, 0.0, 1.0)
            dist.node_probs = np.clip(a * new_nodes + (1 - a) * dist.node_probs, 0.0, 1.0)
            if joint:
                k1_new = np.bincount([s.k1 - 1 for s in samples], weights, minlength=k) / total
                d_new = np.bincount([s.d - 1 for s in samples], weights, minlength=D) / total
                dist.k1_probs = _renorm(a * k1_new + (1 - a) * dist.k1_probs)
                dist.d_probs = _renorm(a * d_new + (1 - a) * dist.d_probs)
        dist.check()
        history.append(CeIteration(it, size, lead.objective_value, gamma, best.objective_value,
                                   dist.copy(), tuple(samples)))

        if _degenerate(dist, k, joint):
            break
        if improved:
            stall = 0
            size = n_min
        else:
            stall += 1
            if stall >= params.stall_limit:
                break
            size = min(n_max, 2 * size)

    return CeResult(best, best_est, history, len(cache))


def _renorm(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _degenerate(dist: CeDistribution, k: int, joint: bool) -> bool:
    """True when only one sample can be drawn any more."""
    p = dist.node_probs
    if not np.all((p == 0.0) | (p == 1.0)):
        return False
    if joint:
        if np.count_nonzero(dist.k1_probs) != 1 or np.count_nonzero(dist.d_probs) != 1:
            return False
        k = int(np.argmax(dist.k1_probs)) + 1
    return int(np.count_nonzero(p)) == k


def ce_optimize(
    graph: Graph,
    k: int,
    objective: Callable[[Sequence[int]], Value],
    params: Optional[CeParams] = None,
    initial: Optional[CeDistribution] = None,
) -> CeResult:
    """FACE over seed sets of size ``k``; returns the best set ever sampled."""
    params = params or CeParams()
    n = graph.node_count
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, node_count]")
    if k == 0:
        val, est = _as_value(objective(()))
        return CeResult(JointSample(0, 0, (), val), est, [], 1)
    return _optimize(n, k, 1, False, lambda k1, d, s1: objective(s1), params, initial)


def ce_select(
    graph: Graph,
    k: int,
    objective: Callable[[Sequence[int]], Value],
    params: Optional[CeParams] = None,
    initial: Optional[CeDistribution] = None,
) -> SeedSet:
    res = ce_optimize(graph, k, objective, params, initial)
    return SeedSet(
        res.best.s1, k, (res.best.objective_value,),
        {"iterations": len(res.history), "evaluations": res.evaluations},
    )


@dataclass(frozen=True)
class JointResult:
    k1: int
    d: int
    seeds: SeedSet
    value: float
    estimate: Optional[SpreadEstimate]
    result: CeResult = field(compare=False, repr=False)


def ce_joint_optimize(
    graph: Graph,
    k: int,
    D: int,
    objective: Callable[[int, int, Tuple[int, ...]], Value],
    params: Optional[CeParams] = None,
    initial: Optional[CeDistribution] = None,
) -> JointResult:
    """FACE over (k1, d, S1) with k1 in 1..k, d in 1..D and |S1| = k1.

    ``objective(k1, d, s1)`` scores a plan whose second phase gets the
    remaining ``k - k1`` seeds.
    """
    params = params or CeParams()
    if D < 1:
        raise ValueError("D must be at least 1")
    if not 1 <= k <= graph.node_count:
        raise ValueError("k must lie in [1, node_count]")
    res = _optimize(graph.node_count, k, D, True, objective, params, initial)
    b = res.best
    return JointResult(b.k1, b.d, SeedSet(b.s1, b.k1, (b.objective_value,)),
                       b.objective_value, res.estimate, res)


def with_seed(params: CeParams, seed: int) -> CeParams:
    return replace(params, master_seed=seed)
