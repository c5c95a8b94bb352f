import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twophase_im.cascade import (
    _UNREACHED, DiffusionState, LiveGraph, ScheduleRun, SeedSchedule, SpreadEstimate, WorldSample,
    continue_simulation, estimate_decay_spread, estimate_spread, hop_distances, reach,
    run_samples, run_schedule, sample_live_graph, simulate,
)
from twophase_im.graph import Graph
from twophase_im.oracle import exact_decay_sigma, exact_sigma

from graphs import random_graph


def live(toy, alive_edges):
    return LiveGraph(toy, tuple(e in alive_edges for e in ("AB", "BC", "BD")))


def test_live_graph_extremes(toy):
    assert sample_live_graph(toy.with_probs([1.0] * 3), 5).alive == (True,) * 3
    assert sample_live_graph(toy.with_probs([0.0] * 3), 5).alive == (False,) * 3


def test_all_alive_frequency(toy):
    n = 100_000
    hits = sum(run_samples(toy, lambda g, alive, i: all(alive), n, 3))
    p = 0.5 * 0.8 * 0.9
    assert abs(hits - n * p) <= 5 * math.sqrt(n * p * (1 - p))


def test_reach_examples(toy):
    assert reach(live(toy, {"AB", "BC", "BD"}), {0})[0] == 4
    assert reach(live(toy, set()), {0}) == (1, frozenset({0}))
    assert reach(live(toy, {"BC", "BD"}), {0})[0] == 1


def test_simulate_one_step_from_a(toy):
    hits = 0
    for seed in range(400):
        y = simulate(toy, SeedSchedule.single({0}), until=1, sample_seed=seed)
        assert y.clock == 1
        assert y.active_set - y.frontier == {0}
        assert y.frontier in (frozenset(), frozenset({1}))
        hits += y.frontier == {1}
    assert abs(hits - 200) <= 5 * 10


def test_simulate_until_zero(toy):
    y = simulate(toy, SeedSchedule.single({0}), until=0, sample_seed=1)
    assert y.active_set == y.frontier == {0}


def test_exhaustion_matches_reach(toy):
    for seed in range(50):
        state = simulate(toy, SeedSchedule.single({0}), sample_seed=seed)
        assert state.active_set == reach(sample_live_graph(toy, seed), {0})[1]


def test_continue_dead_state_unchanged(toy):
    g = toy.with_probs([0.0] * 3)
    y = simulate(g, SeedSchedule.single({0}), until=1, sample_seed=0)
    assert not y.frontier
    after = continue_simulation(g, y, (), until=5, sample_seed=0)
    assert after.active_set == y.active_set
    assert after.times == y.times


def test_continue_with_all_inactive(toy):
    y = simulate(toy, SeedSchedule.single({2}), until=1, sample_seed=4)
    rest = set(toy.nodes) - y.active_set
    assert continue_simulation(toy, y, rest, sample_seed=4).active_count == 4


def test_continue_after_frontier_b(toy):
    # given AB alive, adding C at time 1 finishes with 4 nodes exactly when BD is alive
    hits = total = 0
    for seed in range(2000):
        y = simulate(toy, SeedSchedule.single({0}), until=1, sample_seed=seed)
        if y.frontier != {1}:
            continue
        total += 1
        final = continue_simulation(toy, y, {2}, sample_seed=seed)
        assert final.active_count in (3, 4)
        hits += final.active_count == 4
    assert abs(hits - 0.9 * total) <= 5 * math.sqrt(total * 0.09)


def test_continue_rejects_active_seed(toy):
    y = simulate(toy, SeedSchedule.single({0}), until=1, sample_seed=0)
    with pytest.raises(ValueError):
        continue_simulation(toy, y, {0})


def test_schedule_validation():
    with pytest.raises(ValueError):
        SeedSchedule([(1, {0}), (0, {1})])
    with pytest.raises(ValueError):
        SeedSchedule([(0, {0}), (2, {0})])


def test_isolated_node_spread():
    est = estimate_spread(Graph(1), {0}, 200, 0)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_single_sample_is_degenerate(toy):
    est = estimate_spread(toy, {0}, 1, 0)
    assert est.std_error == 0.0 and est.degenerate


def test_spread_of_a_converges(toy):
    est = estimate_spread(toy, {0}, 100_000, 1)
    assert abs(est.mean - 2.35) <= 3 * est.std_error


def test_decay_reductions(toy):
    plain = run_samples(toy, ScheduleRun(SeedSchedule.single({0})), 3000, 9)
    decay = run_samples(toy, ScheduleRun(SeedSchedule.single({0}), 1.0), 3000, 9)
    assert plain == decay
    assert estimate_decay_spread(toy, {0}, 1.0, 3000, 9) == estimate_spread(toy, {0}, 3000, 9)
    zero = estimate_decay_spread(toy, {0, 2}, 0.0, 500, 9)
    assert zero.mean == 2.0 and zero.std_error == 0.0


def test_decay_half_on_toy(toy):
    exact = exact_decay_sigma(toy, SeedSchedule.single({0}), 0.5)
    assert exact == pytest.approx(1 + 0.5 * 0.5 * (1 + 0.5 * (0.8 + 0.9)), abs=1e-12)
    est = estimate_decay_spread(toy, {0}, 0.5, 50_000, 2)
    assert abs(est.mean - exact) <= 3 * est.std_error


def test_phase_two_seed_counts_at_its_injection_time():
    g = Graph(2)
    sched = SeedSchedule.two_phase({0}, 3, {1})
    est = estimate_decay_spread(g, sched, 0.5, 10, 0)
    assert est.mean == 1 + 0.5 ** 3


def test_worker_count_does_not_change_results(toy):
    g = random_graph(5, n=12, max_edges=40)
    a = estimate_spread(g, {0, 1}, 3000, 4, workers=1)
    b = estimate_spread(g, {0, 1}, 3000, 4, workers=3)
    assert a == b


def test_spread_estimate_from_values():
    est = SpreadEstimate.from_values([1.0, 2.0, 3.0])
    assert est.mean == 2.0 and est.std_error == pytest.approx(1 / math.sqrt(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(1, 4))
def test_activation_times(gseed, sseed, d):
    g = random_graph(gseed, max_nodes=7, max_edges=18)
    rng = np.random.default_rng(sseed)
    s1 = {int(rng.integers(g.node_count))}
    s2 = {int(v) for v in rng.choice(g.node_count, size=2)} - s1
    alive = sample_live_graph(g, sseed).alive
    y = run_schedule(g, list(alive), SeedSchedule.single(s1), until=d)
    assert y.frontier <= y.active_set
    assert y.frontier == {v for v in y.active_set if y.activation_time(v) == y.clock}
    extra = s2 - y.active_set
    final = run_schedule(g, list(alive), SeedSchedule.two_phase(s1, d, extra))
    for v in final.active_set:
        t = final.activation_time(v)
        if v in s1:
            assert t == 0
            continue
        if v in extra:
            assert t == d
            continue
        parents = [final.activation_time(u) for u, w, _ in g.edges()
                   if w == v and alive[g.edge_id(u, v)] and u in final.active_set]
        assert min(parents) == t - 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_nested_sets_ordered_per_sample(seed):
    g = random_graph(seed, max_nodes=6, max_edges=12)
    small = ScheduleRun(SeedSchedule.single({0}))
    big = ScheduleRun(SeedSchedule.single({0, g.node_count - 1}))
    a = run_samples(g, small, 300, seed)
    b = run_samples(g, big, 300, seed)
    assert all(x <= y for x, y in zip(a, b))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_hop_distances_match_bfs(seed):
    g = random_graph(seed, max_nodes=7, max_edges=20)
    alive = np.random.default_rng(seed).random((3, g.edge_count)) < g.prob
    dist = hop_distances(g.node_count, g.src, g.dst, alive)
    for w in range(3):
        for s in g.nodes:
            state = run_schedule(g, alive[w].tolist(), SeedSchedule.single({s}))
            for v in g.nodes:
                t = state.activation_time(v)
                assert dist[w, s, v] == (_UNREACHED if t is None else t)


def test_world_sample_matches_exact():
    for seed in range(5):
        g = random_graph(seed, n=5, max_edges=10)
        ws = WorldSample(g, 20_000, seed)
        wd = WorldSample(g, 20_000, seed, delta=0.6)
        for s in ([0], [1, 3]):
            vals = ws.values(s)
            se = vals.std(ddof=1) / math.sqrt(len(vals))
            assert abs(vals.mean() - exact_sigma(g, s)) <= 4 * se + 1e-12
            dv = wd.values(s)
            se = dv.std(ddof=1) / math.sqrt(len(dv))
            exact = exact_decay_sigma(g, SeedSchedule.single(s), 0.6)
            assert abs(dv.mean() - exact) <= 4 * se + 1e-12


def test_world_sample_prefix_cache_is_transparent():
    g = random_graph(2, n=6, max_edges=14)
    ws = WorldSample(g, 200, 1, delta=0.5)
    fresh = WorldSample(g, 200, 1, delta=0.5)
    for s in ([0], [0, 1], [0, 2], [3, 2], [0, 1, 4]):
        ws(s)
    assert ws([0, 1, 4]) == fresh([0, 1, 4])
    assert ws([5]) == fresh([5])


def test_diffusion_state_helpers():
    y = DiffusionState((0, 1, -1, 1), 1)
    assert y.active_set == {0, 1, 3} and y.frontier == {1, 3}
    assert y.timeline() == [1, 2]
    assert y.decay_value(0.0) == 1.0
    assert y.decay_value(0.5) == 2.0
