"""Command line entry point: ``morlcam <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import _kernels
from .camproto import CameraDevice, LatencyModel, VirtualClock, WallClock, serve
from .camsim import load_scenario, preset_names
from .core import DEFAULT_SETTINGS, enumerate_grid
from .estimators import evaluate_estimator, true_accuracy
from .harness import (
    ELIXIR,
    PolicyKind,
    agent_config,
    compare_strategies,
    run_policy,
    strategy_for,
    summarize,
    write_trace,
)
from .morl import StrategyKind, save_tables
from .oracle import common_optimal, conflict_matrix, find_best_conf, format_table

POLICIES = ("default", "timesharing", "elixir")


def _phase(scenario, name):
    if name is None:
        return scenario.phases[0]
    for p in scenario.phases:
        if p.name == name:
            return p
    raise ValueError(f"scenario {scenario.name!r} has no phase {name!r}")


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def _agent_overrides(args) -> dict:
    return {
        "explore_steps": args.explore_steps,
        "step": args.step,
        "reward_mode": args.reward_mode,
        "strategy": args.strategy,
        "gamma": args.gamma,
    }


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = agent_config(scenario, **_agent_overrides(args))
    names = POLICIES if args.policy == "all" else (args.policy,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces, clock = {}, {}
    for name in names:
        if name == "default":
            policy = PolicyKind.default()
        elif name == "timesharing":
            policy = PolicyKind.time_sharing(args.slot_steps, cfg)
        else:
            policy = PolicyKind.elixir(cfg)
        agents = []
        t0 = time.perf_counter()
        rows = run_policy(policy, scenario, args.seed, binomial=args.binomial, agents=agents)
        clock[name] = time.perf_counter() - t0
        traces[name] = rows
        write_trace(rows, out / f"trace_{name}.csv")
        if name == ELIXIR and agents:
            save_tables(agents[0].tables, out / "qtables_elixir.txt")
    report = summarize(traces, clock)
    summary = {"scenario": scenario.name, "seed": args.seed, "backend": _kernels.BACKEND, **report.to_json()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    header = ["policy"] + list(scenario.au_names) + ["total", "seconds"]
    rows = [[n] + [f"{report.cumulative[n][a]:,}" for a in scenario.au_names]
            + [f"{report.totals[n]:,}", f"{clock[n]:.1f}"] for n in traces]
    text = format_table(header, rows)
    if "elixir" in traces:
        for other in traces:
            if other != "elixir":
                d = report.deltas["elixir"][other]
                text += "\nelixir vs {}: ".format(other) + ", ".join(
                    f"{a} {d[a]['text']}" for a in [*scenario.au_names, "total"])
    _emit(args, summary, text + f"\nwrote {out}/")
    return 0


def cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    phase = _phase(scenario, args.phase)
    grid = enumerate_grid(args.grid_step)
    profiles = scenario.au_profiles
    if args.au:
        profiles = tuple(scenario.profile(n) for n in args.au)
    if args.mode == "find-best":
        results = {}
        for p in profiles:
            t0 = time.perf_counter()
            res = find_best_conf(p, phase, grid)
            results[p.name] = {**res.to_json(), "seconds": time.perf_counter() - t0,
                               "default_score": true_accuracy(p, DEFAULT_SETTINGS, phase)}
        rows = [[n, r["best_settings"], f"{r['primary_score']:.2f}", f"{r['secondary_score']:.2f}",
                 f"{r['evaluations']:,}", f"{r['default_score']:.2f}"] for n, r in results.items()]
        text = format_table(["AU", "best settings", "score", "neighbourhood", "evaluations", "at default"], rows)
        _emit(args, {"phase": phase.name, "results": results}, text)
    elif args.mode == "conflict":
        cm = conflict_matrix(profiles, phase, grid)
        _emit(args, {"phase": phase.name, **cm.to_json()}, cm.to_text())
    else:
        strategy = strategy_for(scenario, args.strategy)
        res = common_optimal(profiles, phase, grid, strategy)
        per_au = {p.name: true_accuracy(p, res.best_settings, phase) for p in profiles}
        text = (f"common optimal ({strategy}) in {phase.name}: {res.best_settings} "
                f"aggregate {res.primary_score:.2f}\n"
                + format_table(["AU", "accuracy"], [[n, f"{v:.2f}"] for n, v in per_au.items()]))
        _emit(args, {"phase": phase.name, "strategy": str(strategy), **res.to_json(), "per_au": per_au}, text)
    return 0


def cmd_strategies(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = agent_config(scenario, **_agent_overrides(args))
    report = compare_strategies(scenario, args.seeds, cfg)
    payload = {"scenario": scenario.name, "seeds": args.seeds, "strategies": report.strategies,
               "wall_clock_s": report.wall_clock}
    rows = [[r["rank"], r["strategy"], f"{r['total_detections']:,}", f"{r['mean_aggregate_quality']:.2f}",
             f"{r['mean_quality']:.2f}"] for r in report.strategies]
    text = format_table(["rank", "strategy", "detections", "own aggregate", "mean quality"], rows)
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    _emit(args, payload, text)
    return 0


def cmd_estimator_eval(args) -> int:
    scenario = load_scenario(args.scenario)
    phase = _phase(scenario, args.phase)
    noise = scenario.noise_sigma if args.noise is None else args.noise
    names = args.au or list(scenario.au_names)
    reports = {n: evaluate_estimator(scenario.profile(n), phase, noise, args.samples, args.seed, args.grid_step)
               for n in names}
    payload = {"phase": phase.name, "noise_sigma": noise, "results": [r.to_json(n) for n, r in reports.items()]}
    rows = [[n, f"{r.pearson:.3f}", f"{r.spearman:.3f}", r.sample_count] for n, r in reports.items()]
    _emit(args, payload, format_table(["AU", "pearson", "spearman", "samples"], rows))
    return 0


def cmd_serve(args) -> int:
    scenario = load_scenario(args.scenario)
    latency = LatencyModel.load(args.latency_file) if args.latency_file else LatencyModel()
    overrides = {k: getattr(args, k) for k in ("set_params_ms", "frame_upload_ms", "estimator_ms", "aggregate_ms")
                 if getattr(args, k) is not None}
    if overrides:
        latency = LatencyModel(**{**latency.__dict__, **overrides})
    clock = WallClock() if args.wall_clock else VirtualClock()
    device = CameraDevice(scenario, latency, clock, args.step_period_ms)

    def ready(addr):
        print(f"serving {scenario.name} on {addr[0]}:{addr[1]} "
              f"({'wall' if args.wall_clock else 'virtual'} clock)", flush=True)

    try:
        serve(device, args.host, args.port, ready)
    except KeyboardInterrupt:
        pass
    return 0


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morlcam", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    scenario_help = f"scenario YAML file or preset name ({', '.join(preset_names())})"

    def agent_flags(sp):
        sp.add_argument("--explore-steps", type=int, help="exploration steps before exploitation")
        sp.add_argument("--step", type=int, help="settings stride for actions and state bins")
        sp.add_argument("--reward-mode", choices=["delta", "raw"])
        sp.add_argument("--gamma", type=float)

    r = sub.add_parser("run", help="run policies over a scenario and write traces")
    r.add_argument("--scenario", default="drift4", help=scenario_help)
    r.add_argument("--policy", choices=[*POLICIES, "all"], default="all")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="runs")
    r.add_argument("--slot-steps", type=int, default=10)
    r.add_argument("--strategy", choices=[k.value for k in StrategyKind])
    r.add_argument("--binomial", action="store_true", help="sample detections instead of rounding")
    r.add_argument("--json", action="store_true")
    agent_flags(r)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="brute-force ground truth on the settings grid")
    o.add_argument("mode", choices=["find-best", "conflict", "common"])
    o.add_argument("--scenario", default="demo3d", help=scenario_help)
    o.add_argument("--phase")
    o.add_argument("--au", action="append", help="restrict to this AU (repeatable)")
    o.add_argument("--grid-step", type=int, default=10)
    o.add_argument("--strategy", choices=[k.value for k in StrategyKind], default="linear")
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("strategies", help="compare aggregation strategies")
    s.add_argument("--scenario", default="drift4", help=scenario_help)
    s.add_argument("--seeds", type=_seeds, default=[3])
    s.add_argument("--out", help="also write the JSON report here")
    s.add_argument("--json", action="store_true")
    agent_flags(s)
    s.set_defaults(func=cmd_strategies, strategy=None)

    e = sub.add_parser("estimator-eval", help="correlate estimator scores with true accuracy")
    e.add_argument("--scenario", default="demo3d", help=scenario_help)
    e.add_argument("--phase")
    e.add_argument("--au", action="append")
    e.add_argument("--noise", type=float, help="noise sigma (default: the scenario's)")
    e.add_argument("--samples", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--grid-step", type=int, default=10)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_estimator_eval)

    v = sub.add_parser("serve", help="serve the simulated camera over TCP")
    v.add_argument("--scenario", default="drift4", help=scenario_help)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=7070)
    v.add_argument("--step-period-ms", type=float, default=1000.0)
    v.add_argument("--latency-file", help="YAML/JSON mapping of latency overrides")
    v.add_argument("--set-params-ms", type=float)
    v.add_argument("--frame-upload-ms", type=float)
    v.add_argument("--estimator-ms", type=float)
    v.add_argument("--aggregate-ms", type=float)
    v.add_argument("--wall-clock", action="store_true", help="charge latencies in real time")
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"morlcam {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
