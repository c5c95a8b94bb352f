"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The lines are printed as they are produced and again in the terminal
summary (see conftest.py), so ``pytest -v`` shows them without ``-s``.
"""

import itertools
import math
import time
import warnings

import pytest

from twophase_im import cli
from twophase_im.cascade import (
    ScheduleRun, SeedSchedule, estimate_decay_spread, estimate_spread, run_samples,
)
from twophase_im.graph import toy_graph
from twophase_im.heuristics import gdd_scores, gdd_select, greedy_select, weighted_degree_select
from twophase_im.oracle import (
    SecondPhasePolicy, enumerate_worlds, exact_sigma, exact_two_phase, exact_two_phase_detail,
)
from twophase_im.twophase import (
    TwoPhaseConfig, TwoPhasePlan, agreement_diagnostics, estimate_f, estimate_h,
    replicate_two_phase, select_phase1,
)

from graphs import TOY_TEXT, ba_wc_graph, random_graph, write_undirected

RESULTS = []


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def ba100_file(tmp_path_factory):
    return str(write_undirected(tmp_path_factory.mktemp("ba") / "ba100.txt", 100, 2, 1))


def table(path):
    with open(path) as fh:
        body = [line.rstrip("\n").split(",") for line in fh if not line.startswith("#")]
    head, rows = body[0], body[1:]
    return [dict(zip(head, r)) for r in rows]


def test_criterion_01_toy_table():
    t0 = time.perf_counter()
    g = toy_graph()
    res = exact_two_phase_detail(g, {0}, 1, 1, SecondPhasePolicy.OPTIMAL)
    by_frontier = {grp.state.frontier: grp.second_phase for grp in res.groups}
    probs = sorted(p for _, p in enumerate_worlds(g))
    expected = sorted([0.36, 0.04, 0.09, 0.01] * 2)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(res.value - 3.80) <= 1e-9
        and by_frontier[frozenset({1})] == (2,)
        and by_frontier[frozenset()] == (1,)
        and all(abs(a - b) <= 1e-12 for a, b in zip(probs, expected))
        and elapsed < 1.0
    )
    assert record(1, ok, f"g({{A}}) = {res.value:.12f}, S2 = C | B seen, B | nothing seen, "
                         f"{elapsed:.3f} s")


def test_criterion_02_monte_carlo_matches_oracle():
    t0 = time.perf_counter()
    worst, checks, fails = 0.0, 0, []
    for i in range(20):
        g = random_graph(1000 + i, max_nodes=6, max_edges=10)
        s1, d = {0}, 1 + i % 2
        pairs = [
            (estimate_spread(g, s1, 20_000, i), exact_sigma(g, s1)),
            (estimate_h(g, s1, 1, d, 20_000, i), exact_two_phase(g, s1, 1, d, SecondPhasePolicy.GDD)),
            (estimate_f(g, s1, 1, d, 20_000, i), exact_two_phase(g, s1, 1, d, SecondPhasePolicy.GREEDY)),
        ]
        for est, exact in pairs:
            checks += 1
            gap = abs(est.mean - exact)
            if est.std_error == 0.0:
                bad = gap > 1e-9
            else:
                worst = max(worst, gap / est.std_error)
                bad = gap > 3 * est.std_error
            if bad:
                fails.append((i, est.mean, exact))
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 60.0
    assert record(2, ok, f"{checks - len(fails)}/{checks} within 3 SE (worst {worst:.2f} SE), "
                         f"{elapsed:.1f} s")


def _g_table(g, k2, d):
    n = g.node_count
    return {
        frozenset(s): exact_two_phase(g, s, k2, d)
        for r in range(1, n + 1) for s in itertools.combinations(range(n), r)
    }


def test_criterion_03_structure_of_two_phase_value():
    graphs = [random_graph(2000 + i, n=5, max_edges=8) for i in range(10)]
    violations = pairs = sub = sup = 0
    for g in graphs:
        for k2, d in ((1, 1), (1, 2), (2, 1)):
            val = _g_table(g, k2, d)
            for s, t in itertools.permutations(val, 2):
                if not s < t:
                    continue
                if (k2, d) == (1, 1):
                    pairs += 1
                    violations += val[s] > val[t] + 1e-9
                for v in set(range(5)) - t:
                    a, b = val[s | {v}] - val[s], val[t | {v}] - val[t]
                    sub += a < b - 1e-9
                    sup += a > b + 1e-9
    if not (sub and sup):
        warnings.warn("counterexample search exhausted its budget")
    ok = violations == 0
    assert record(3, ok, f"{violations} monotonicity violations in {pairs} nested pairs; "
                         f"{sub} submodularity and {sup} supermodularity violations found")


def test_criterion_04_single_phase_facts():
    graphs = [toy_graph()] + [random_graph(3000 + i, max_nodes=5, max_edges=8) for i in range(20)]
    mono = subm = mismatch1 = below_bound = greedy_opt = 0
    for g in graphs:
        nodes = range(g.node_count)
        sigma = {frozenset(): 0.0}
        for r in range(1, g.node_count + 1):
            for s in itertools.combinations(nodes, r):
                sigma[frozenset(s)] = exact_sigma(g, s)
        for s, t in itertools.product(sigma, repeat=2):
            if s <= t:
                mono += sigma[s] > sigma[t] + 1e-9
                for v in set(nodes) - t:
                    subm += sigma[s | {v}] - sigma[s] < sigma[t | {v}] - sigma[t] - 1e-9
        for k in range(1, min(3, g.node_count) + 1):
            picked = greedy_select(g, k, (), lambda s: sigma[frozenset(s)]).members
            best = max(v for s, v in sigma.items() if len(s) == k)
            got = sigma[frozenset(picked)]
            if k == 1:
                top = min(s for s, v in sigma.items() if len(s) == 1 and v >= best - 1e-12)
                mismatch1 += frozenset(picked) != top
            else:
                below_bound += got < (1 - 1 / math.e) * best - 1e-9
                greedy_opt += got >= best - 1e-9
    ok = mono == 0 and subm == 0 and mismatch1 == 0 and below_bound == 0
    assert record(4, ok, f"{mono} monotonicity / {subm} submodularity violations; greedy = argmax "
                         f"for k=1 on all {len(graphs)} graphs, optimal in {greedy_opt} k>=2 cases, "
                         f"{below_bound} below the 1-1/e bound")


def test_criterion_05_gdd():
    g = toy_graph()
    first = gdd_select(g, 1)
    partial = gdd_select(g, 1, {0})
    hand = (first.members == (1,) and abs(first.scores[0] - 2.7) < 1e-12
            and partial.members == (1,) and abs(partial.scores[0] - 1.35) < 1e-12
            and gdd_scores(g, {0})[2] == 1.0)
    agree = sum(
        gdd_select(h, 1).members == weighted_degree_select(h, 1).members
        for h in (random_graph(4000 + i, max_nodes=12, max_edges=40) for i in range(50))
    )
    ok = hand and agree == 50
    assert record(5, ok, f"toy scores B 2.7, B|A 1.35; gdd = weighted degree on {agree}/50 graphs")


def test_criterion_06_two_phase_gain():
    g = ba_wc_graph(100, 2, 1)
    k, d, reps = 6, g.node_count, 50_000
    far = TwoPhaseConfig(mc_samples=200, master_seed=0)
    plan = TwoPhasePlan(k, 3, 3, d, phase1_alg="greedy", phase2_alg="gdd", mode="farsighted")
    two = replicate_two_phase(g, plan, reps, 1, far).estimate
    single_plan = TwoPhasePlan(k, k, 0, d, mode="myopic")
    single_set = select_phase1(g, single_plan, TwoPhaseConfig(mc_samples=1000, master_seed=0))
    one = estimate_spread(g, single_set.members, reps, 1)
    se = math.hypot(two.std_error, one.std_error)
    gain = (two.mean - one.mean) / one.mean
    ok = two.mean - one.mean >= -se
    assert record(6, ok, f"two-phase {two.mean:.3f} vs single-phase {one.mean:.3f} "
                         f"(joint SE {se:.3f}); gain {100 * gain:.2f}%")


def test_criterion_07_budget_split(ba100_file, tmp_path):
    best = []
    for seed in range(10):
        out = tmp_path / f"sweep{seed}.csv"
        code = cli.main(["sweep", "--graph", ba100_file, "--undirected", "--weights", "wc",
                         "-k", "6", "--delta", "1", "--d-policy", "max", "--samples", "3000",
                         "--select-samples", "300", "--seed", str(seed), "--out", str(out)])
        assert code == 0
        rows = table(out)
        best.append(int(max(rows, key=lambda r: float(r["mean_spread"]))["k1"]))
    hits = sum(b in (2, 3, 4) for b in best)
    ok = hits >= 8
    assert record(7, ok, f"best k1 per repetition {best}; in {{2,3,4}} for {hits}/10")


def test_criterion_08_f_h_agreement():
    g = ba_wc_graph(50, 2, 1)
    config = TwoPhaseConfig(mc_samples=1000, master_seed=0, inner_worlds=50)
    rep = agreement_diagnostics(g, 1, 1, 100, config, set_size=2, min_gap_se=2.0)
    ok = (len(rep.pairs) == 100 and rep.rank_agreement >= 0.9
          and rep.median_ratio_gap <= 0.05)
    assert record(8, ok, f"{len(rep.pairs)} pairs ({rep.attempts} drawn): rank agreement "
                         f"{100 * rep.rank_agreement:.0f}%, median ratio gap "
                         f"{rep.median_ratio_gap:.4f}")


def test_criterion_09_decay_reductions(ba100_file, tmp_path):
    g = ba_wc_graph(100, 2, 1)
    sched = SeedSchedule.single({0, 5, 9})
    plain = run_samples(g, ScheduleRun(sched), 3000, 2)
    decay = run_samples(g, ScheduleRun(sched, 1.0), 3000, 2)
    same = plain == decay and estimate_decay_spread(g, sched, 1.0, 3000, 2) == \
        estimate_spread(g, sched, 3000, 2)
    two = SeedSchedule.two_phase({0, 5}, 3, {40})
    zero = estimate_decay_spread(g, two, 0.0, 3000, 2)
    exact_zero = zero.mean == 2.0 and zero.std_error == 0.0
    out = tmp_path / "sweep0.csv"
    cli.main(["sweep", "--graph", ba100_file, "--undirected", "--weights", "wc", "-k", "6",
              "--delta", "0", "--samples", "500", "--select-samples", "100", "--out", str(out)])
    column = all(float(r["mean_spread"]) == int(r["k1"]) for r in table(out))
    ok = same and exact_zero and column
    assert record(9, ok, f"delta=1 identical per run: {same}; delta=0 gives seed count: "
                         f"{exact_zero}; sweep delta=0 column equals k1: {column}")


def test_criterion_10_determinism(ba100_file, tmp_path):
    toy = tmp_path / "toy.txt"
    toy.write_text(TOY_TEXT)
    g = ["--graph", ba100_file, "--undirected", "--weights", "wc", "--seed", "3"]
    commands = [
        ["select"] + g + ["--alg", "greedy", "-k", "3", "--samples", "2500", "--select-samples", "200"],
        ["select"] + g + ["--alg", "gdd", "-k", "3", "--samples", "2500"],
        ["simulate"] + g + ["--seeds", "0,1", "--seeds2", "7", "-d", "2", "--samples", "2500"],
        ["twophase"] + g + ["-k", "4", "--k1", "2", "-d", "3", "--samples", "2500",
                            "--select-samples", "150", "--format", "json"],
        ["sweep"] + g + ["-k", "3", "--delta", "1,0.5", "--samples", "2500", "--select-samples", "150"],
        ["progression"] + g + ["-k", "3", "--pairs", "1:2,3:1", "--samples", "2500",
                               "--select-samples", "150"],
        ["exact", "--graph", str(toy), "--g", "--s1", "A", "--k2", "1", "-d", "1"],
    ]
    identical = 0
    for i, argv in enumerate(commands):
        outs = []
        for j, threads in enumerate((1, 1, 4)):
            path = tmp_path / f"c{i}_{j}.out"
            assert cli.main(argv + ["--threads", str(threads), "--out", str(path)]) == 0
            outs.append(path.read_bytes())
        identical += outs[0] == outs[1] == outs[2]
    ok = identical == len(commands)
    assert record(10, ok, f"{identical}/{len(commands)} commands byte-identical across reruns "
                          f"and --threads 1/4")
