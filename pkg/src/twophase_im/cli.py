"""Command-line front end.

Every command writes CSV (``twophase`` can also write JSON) that starts
with ``#`` lines echoing the resolved configuration, so an output file is
enough to reproduce itself. The echo leaves out ``--out`` and ``--threads``
because neither affects results.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from twophase_im import __version__
from twophase_im.cascade import SeedSchedule, estimate_decay_spread, run_samples, run_schedule
from twophase_im.crossentropy import CeParams, ce_joint_optimize, ce_select
from twophase_im.graph import Graph, WeightModel, load_edge_list
from twophase_im.heuristics import SelectorConfig, gdd_select, greedy_select, weighted_degree_select
from twophase_im import oracle, twophase as tp

log = logging.getLogger("twophase_im")

ENV_PREFIX = "TWOPHASE_IM_"
_UNECHOED = {"out", "threads", "func", "verbose", "timing"}


def _env(name: str, default):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return type(default)(raw)
    except ValueError:
        print(f"twophase-im: error: bad value {raw!r} for {ENV_PREFIX + name}", file=sys.stderr)
        raise SystemExit(2)


def fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return format(x, ".12g")
    return str(x)


# -- argument parsing --------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph and reproducibility")
    g.add_argument("--graph", required=True, help="edge-list file: 'u v [p]' per line")
    g.add_argument("--undirected", action="store_true", help="each line yields both directions")
    g.add_argument("--weights", default=_env("WEIGHTS", "given"),
                   help="given | wc | triv | uniform:P (default: given)")
    g.add_argument("--weight-seed", type=int, default=0, help="seed for trivalency weights")
    g.add_argument("--samples", type=int, default=_env("SAMPLES", 1000),
                   help="Monte Carlo samples / replications")
    g.add_argument("--seed", type=int, default=_env("SEED", 0), help="master seed")
    g.add_argument("--threads", type=int, default=_env("THREADS", 1), help="worker processes")
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")


def _selection(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("selection")
    g.add_argument("--select-samples", type=int, default=_env("SELECT_SAMPLES", 500),
                   help="samples behind objective estimates used for selection")
    g.add_argument("--inner-worlds", type=int, default=200,
                   help="sampled live graphs behind second-phase greedy")
    g.add_argument("--no-lazy", action="store_true", help="exhaustive instead of lazy greedy")
    g.add_argument("--ce-min", type=int, help="FACE minimum sample size (default 10k)")
    g.add_argument("--ce-max", type=int, help="FACE maximum sample size (default 100k)")
    g.add_argument("--ce-elite", type=float, default=0.1, help="FACE elite fraction")
    g.add_argument("--ce-smoothing", type=float, default=0.7, help="FACE smoothing")
    g.add_argument("--ce-iters", type=int, default=50, help="FACE iteration limit")
    g.add_argument("--ce-stall", type=int, default=5, help="FACE stall limit")


def _plan_args(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    g = p.add_argument_group("two-phase plan")
    g.add_argument("-k", type=int, required=True, help="total budget")
    if not sweep:
        g.add_argument("--k1", type=int, help="first-phase budget")
        g.add_argument("--k2", type=int, help="second-phase budget (default k - k1)")
        g.add_argument("-d", type=int, help="delay (default D)")
    g.add_argument("--D", dest="D", type=int, help="largest delay (default: node count)")
    g.add_argument("--phase1-alg", choices=tp.PHASE1_ALGS, default="greedy")
    g.add_argument("--phase2-alg", choices=tp.PHASE2_ALGS, default="gdd")
    g.add_argument("--mode", choices=tp.MODES, default="myopic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twophase-im", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="single-phase seed selection")
    _common(p)
    _selection(p)
    p.add_argument("--alg", choices=("greedy", "gdd", "wdeg", "ce"), default="greedy")
    p.add_argument("-k", type=int, required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="estimate spread of a seed schedule")
    _common(p)
    p.add_argument("--seeds", required=True, help="comma-separated node labels seeded at t=0")
    p.add_argument("--seeds2", default="", help="labels seeded at time d")
    p.add_argument("-d", type=int, default=1)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--timeline", action="store_true", help="mean cumulative count per step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("twophase", help="run the two-phase algorithm")
    _common(p)
    _selection(p)
    _plan_args(p)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--optimize", choices=("fixed", "joint"), default="fixed",
                   help="joint: FACE over (k1, d, S1)")
    p.add_argument("--records", type=int, default=10, help="individual realizations to list")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_twophase)

    p = sub.add_parser("sweep", help="budget split sweep over k1 (and delta)")
    _common(p)
    _selection(p)
    _plan_args(p, sweep=True)
    p.add_argument("--delta", default="1", help="comma-separated decay factors")
    p.add_argument("--k1-grid", help="comma-separated k1 values (default 1..k)")
    p.add_argument("--d-policy", choices=("fixed", "max", "best"), default="max",
                   help="fixed: -d; max: d = D; best: best d over --d-grid")
    p.add_argument("-d", type=int, default=1)
    p.add_argument("--d-grid", help="comma-separated delays for --d-policy best (default 1..D)")
    p.add_argument("--timing", action="store_true", help="add a wall_time column")
    p.set_defaults(func=cmd_sweep_split)

    p = sub.add_parser("progression", help="mean cumulative activations over time")
    _common(p)
    _selection(p)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--pairs", required=True, help="comma-separated k1:d pairs")
    p.add_argument("--horizon", type=int, help="last time step to report")
    p.add_argument("--phase1-alg", choices=tp.PHASE1_ALGS, default="greedy")
    p.add_argument("--phase2-alg", choices=tp.PHASE2_ALGS, default="gdd")
    p.add_argument("--mode", choices=tp.MODES, default="myopic")
    p.set_defaults(func=cmd_progression)

    p = sub.add_parser("exact", help="exact values by enumerating live graphs (small graphs)")
    _common(p)
    p.add_argument("--s1", required=True, help="comma-separated labels")
    p.add_argument("--k2", type=int, default=0)
    p.add_argument("-d", type=int, default=1)
    q = p.add_mutually_exclusive_group()
    q.add_argument("--g", dest="policy", action="store_const", const="optimal",
                   help="optimal second phase (default)")
    q.add_argument("--f", dest="policy", action="store_const", const="greedy",
                   help="greedy second phase")
    q.add_argument("--h", dest="policy", action="store_const", const="gdd", help="GDD second phase")
    q.add_argument("--sigma", dest="policy", action="store_const", const="sigma",
                   help="single-phase spread of --s1")
    p.add_argument("--max-edges", type=int, default=oracle.MAX_EDGES)
    p.set_defaults(func=cmd_exact, policy="optimal")
    return parser


# -- helpers ------------------------------------------------------------------------


def _graph(args) -> Graph:
    weights = WeightModel.parse(args.weights, seed=args.weight_seed)
    return load_edge_list(args.graph, not args.undirected, weights)


def _labels(graph: Graph, text: str) -> List[int]:
    return [graph.node_id(tok) for tok in text.split(",") if tok.strip()] if text else []


def _names(graph: Graph, nodes) -> str:
    return " ".join(graph.labels[v] for v in nodes)


def _config(args) -> tp.TwoPhaseConfig:
    ce = CeParams(args.ce_min, args.ce_max, args.ce_elite, args.ce_smoothing, args.ce_iters,
                  args.ce_stall, args.seed)
    return tp.TwoPhaseConfig(args.select_samples, args.seed, not args.no_lazy, args.threads,
                             args.inner_worlds, ce=ce)


def _echo(args) -> List[str]:
    conf = {k: v for k, v in sorted(vars(args).items()) if k not in _UNECHOED}
    return [f"# twophase-im {__version__} {args.command}", "# config: " + json.dumps(conf, sort_keys=True)]


def _emit(args, header: Sequence[str], rows: Sequence[Sequence], extra: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for line in _echo(args) + list(extra):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    _write(args, buf.getvalue())


def _write(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


class _Timer:
    def __init__(self, label: str):
        self.label = label

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
        log.info("%s: %.3f s", self.label, self.seconds)


# -- commands -------------------------------------------------------------------------


def cmd_select(args) -> int:
    graph = _graph(args)
    config = _config(args)
    with _Timer("selection"):
        if args.alg == "gdd":
            seeds = gdd_select(graph, args.k)
        elif args.alg == "wdeg":
            seeds = weighted_degree_select(graph, args.k)
        elif args.alg == "ce":
            seeds = ce_select(graph, args.k, tp.spread_objective(graph, config), config.ce)
        else:
            seeds = greedy_select(graph, args.k, (), tp.spread_objective(graph, config),
                                  SelectorConfig(config.mc_samples, args.seed, config.lazy))
    rows = []
    with _Timer("evaluation"):
        for i, v in enumerate(seeds.members):
            est = estimate_decay_spread(graph, seeds.members[: i + 1], 1.0, args.samples,
                                        args.seed, args.threads)
            score = seeds.scores[i] if i < len(seeds.scores) else math.nan
            rows.append((i + 1, graph.labels[v], score, est.mean, est.std_error))
    _emit(args, ("rank", "node", "score", "spread_mean", "spread_std_error"), rows)
    return 0


def cmd_simulate(args) -> int:
    graph = _graph(args)
    s1, s2 = _labels(graph, args.seeds), _labels(graph, args.seeds2)
    sched = SeedSchedule.two_phase(s1, args.d, s2)
    if args.timeline:
        results = run_samples(graph, _ScheduleTimeline(sched), args.samples, args.seed, args.threads)
        horizon = max(len(t) for t in results)
        acc = np.zeros(horizon)
        for tl in results:
            c = np.cumsum(tl)
            acc[: len(c)] += c
            acc[len(c):] += c[-1]
        _emit(args, ("t", "mean_cumulative"), list(enumerate((acc / args.samples).tolist())))
        return 0
    est = estimate_decay_spread(graph, sched, args.delta, args.samples, args.seed, args.threads)
    _emit(args, ("seeds", "seeds2", "d", "delta", "samples", "mean", "std_error"),
          [(_names(graph, sorted(s1)), _names(graph, sorted(s2)), args.d, args.delta,
            est.samples, est.mean, est.std_error)])
    return 0


@dataclass(frozen=True)
class _ScheduleTimeline:
    schedule: SeedSchedule

    def __call__(self, g, alive, index):
        return run_schedule(g, alive, self.schedule).timeline()


def _h_joint_objective(graph, k, config, delta, samples):
    def objective(k1, d, s1):
        return tp.estimate_h(graph, s1, k - k1, d, samples, config.master_seed, delta, config)
    return objective


def cmd_twophase(args) -> int:
    graph = _graph(args)
    config = _config(args)
    D = args.D or graph.node_count
    if args.optimize == "joint":
        with _Timer("joint optimization"):
            res = ce_joint_optimize(graph, args.k, D,
                                    _h_joint_objective(graph, args.k, config, args.delta,
                                                       args.select_samples), config.ce)
        k1, d, s1 = res.k1, res.d, res.seeds
        k2 = args.k - k1
    else:
        if args.k1 is None:
            raise SystemExit("twophase: --k1 is required unless --optimize joint")
        k1 = args.k1
        k2 = args.k - k1 if args.k2 is None else args.k2
        d = args.d if args.d is not None else D
        s1 = None
    plan = tp.TwoPhasePlan(args.k, k1, k2, d, args.delta, args.phase1_alg, args.phase2_alg, args.mode)
    if s1 is None:
        with _Timer("phase 1 selection"):
            s1 = tp.select_phase1(graph, plan, config)
    with _Timer("replications"):
        rep = tp.replicate_two_phase(graph, plan, args.samples, args.seed, config, s1,
                                     workers=args.threads)
    records = []
    for i in range(min(args.records, args.samples)):
        out = tp.run_two_phase(graph, plan, config, live_seed=_record_seed(args.seed, i), s1=s1)
        records.append({
            "replication": i,
            "s1": [graph.labels[v] for v in out.s1.members],
            "s2": [graph.labels[v] for v in out.s2.members],
            "observed_active": len(out.observed.active_set),
            "observed_frontier": [graph.labels[v] for v in sorted(out.observed.frontier)],
            "final_count": out.final_count,
            "truncated": out.truncated,
            "timeline": list(out.timeline),
        })
    summary = {
        "k": args.k, "k1": k1, "k2": k2, "d": d, "delta": args.delta,
        "s1": [graph.labels[v] for v in s1.members],
        "mean_spread": rep.estimate.mean, "std_error": rep.estimate.std_error,
        "samples": rep.estimate.samples,
    }
    if args.format == "json":
        conf = {k: v for k, v in sorted(vars(args).items()) if k not in _UNECHOED}
        doc = {"config": conf, "summary": summary, "records": records}
        _write(args, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return 0
    extra = [f"# summary: {json.dumps(summary, sort_keys=True)}"]
    rows = [(r["replication"], " ".join(r["s1"]), " ".join(r["s2"]), r["observed_active"],
             " ".join(r["observed_frontier"]), r["final_count"], int(r["truncated"]))
            for r in records]
    _emit(args, ("replication", "s1", "s2", "observed_active", "observed_frontier",
                 "final_count", "truncated"), rows, extra)
    return 0


def _record_seed(seed: int, i: int) -> int:
    return seed * 1_000_003 + i


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_sweep_split(args) -> int:
    graph = _graph(args)
    config = _config(args)
    D = args.D or graph.node_count
    deltas = _floats(args.delta)
    grid = _ints(args.k1_grid) if args.k1_grid else list(range(1, args.k + 1))
    if args.d_policy == "fixed":
        d_values = [args.d]
    elif args.d_policy == "max":
        d_values = [D]
    else:
        d_values = _ints(args.d_grid) if args.d_grid else list(range(1, D + 1))
    rows = []
    s1_cache: Dict[tuple, object] = {}
    for delta in deltas:
        for k1 in grid:
            t0 = time.perf_counter()
            best = None
            for d in d_values:
                plan = tp.TwoPhasePlan.split(args.k, k1, d, delta=delta, phase1_alg=args.phase1_alg,
                                             phase2_alg=args.phase2_alg, mode=args.mode)
                # myopic phase-1 choice does not depend on d, or on delta when delta is 1
                key = (k1, delta) if args.mode == "myopic" else (k1, d, delta)
                if key not in s1_cache:
                    s1_cache[key] = tp.select_phase1(graph, plan, config)
                rep = tp.replicate_two_phase(graph, plan, args.samples, args.seed, config,
                                             s1_cache[key], workers=args.threads)
                if best is None or rep.estimate.mean > best[1].mean:
                    best = (d, rep.estimate)
            wall = time.perf_counter() - t0
            log.info("k1=%d delta=%s: %.3f s", k1, fmt(delta), wall)
            row = [args.k, k1, args.k - k1, best[0], delta, best[1].mean, best[1].std_error]
            if args.timing:
                row.append(wall)
            rows.append(row)
    header = ["k", "k1", "k2", "d", "delta", "mean_spread", "std_error"]
    if args.timing:
        header.append("wall_time")
    _emit(args, header, rows)
    return 0


def cmd_progression(args) -> int:
    graph = _graph(args)
    config = _config(args)
    pairs = []
    for tok in args.pairs.split(","):
        k1, d = tok.split(":")
        pairs.append((int(k1), int(d)))
    results = []
    for k1, d in pairs:
        plan = tp.TwoPhasePlan.split(args.k, k1, d, phase1_alg=args.phase1_alg,
                                     phase2_alg=args.phase2_alg, mode=args.mode)
        rep = tp.replicate_two_phase(graph, plan, args.samples, args.seed, config,
                                     horizon=(args.horizon or 0) + 1, workers=args.threads)
        results.append((k1, d, rep.mean_cumulative))
    horizon = args.horizon if args.horizon is not None else max(len(c) for *_, c in results) - 1
    rows = []
    for k1, d, cum in results:
        for t in range(horizon + 1):
            rows.append((k1, args.k - k1, d, t, cum[min(t, len(cum) - 1)]))
    _emit(args, ("k1", "k2", "d", "t", "mean_cumulative"), rows)
    return 0


def cmd_exact(args) -> int:
    graph = _graph(args)
    s1 = _labels(graph, args.s1)
    if args.policy == "sigma":
        value = oracle.exact_sigma(graph, s1, args.max_edges)
        _emit(args, ("quantity", "s1", "value"), [("sigma", _names(graph, s1), value)])
        return 0
    res = oracle.exact_two_phase_detail(graph, s1, args.k2, args.d, args.policy, args.max_edges)
    name = {"optimal": "g", "greedy": "f", "gdd": "h"}[args.policy]
    extra = []
    for grp in res.groups:
        extra.append(
            f"# observed active={_names(graph, sorted(grp.state.active_set))!r}"
            f" frontier={_names(graph, sorted(grp.state.frontier))!r} prob={fmt(grp.prob)}"
            f" s2={_names(graph, grp.second_phase)!r} conditional={fmt(grp.value)}"
        )
    _emit(args, ("quantity", "s1", "k2", "d", "value", "truncated"),
          [(name, _names(graph, s1), args.k2, args.d, res.value, int(res.truncated))], extra)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"twophase-im {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
