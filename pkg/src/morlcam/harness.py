"""Policy comparison experiments.

Three camera policies run over the same scenario timeline: fixed default
settings, round-robin time-sharing between single-AU tuners, and the
multi-objective agent. Each run yields one ``TraceRow`` per step with the
true per-AU accuracy and a detection-count proxy derived from it.
"""

from __future__ import annotations

import csv
import io
import math
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .camsim import CameraEnvironment, Observation, ScenarioConfig
from .core import DEFAULT_SETTINGS, Action, CameraSettings, FrameMeasurements
from .estimators import SyntheticEstimator, true_accuracy
from .morl import (
    AgentConfig,
    AggregationStrategy,
    MorlAgent,
    RewardMode,
    StrategyKind,
    aggregate,
)

DEFAULT = "default"
TIME_SHARING = "timesharing"
ELIXIR = "elixir"


class TraceMismatchError(ValueError):
    pass


def agent_config(scenario: ScenarioConfig | None = None, **overrides) -> AgentConfig:
    """AgentConfig from defaults, then the scenario's ``agent`` block, then ``overrides``."""
    values: dict = {}
    if scenario is not None:
        values.update(scenario.agent)
    values.update({k: v for k, v in overrides.items() if v is not None})
    strategy = values.pop("strategy", None)
    if isinstance(strategy, str):
        strategy = strategy_for(scenario, strategy)
    if strategy is not None:
        values["strategy"] = strategy
    if "reward_mode" in values:
        values["reward_mode"] = RewardMode(values["reward_mode"])
    return AgentConfig(**values)


def strategy_for(scenario: ScenarioConfig | None, kind: str | StrategyKind) -> AggregationStrategy:
    kind = StrategyKind(kind)
    if kind is StrategyKind.WEIGHTED:
        weights = dict(scenario.priorities) if scenario is not None else {}
        if scenario is not None:
            for name in scenario.au_names:
                weights.setdefault(name, 1.0)
        return AggregationStrategy.weighted(weights)
    return AggregationStrategy(kind)


@dataclass(frozen=True)
class PolicyKind:
    kind: str
    slot_steps: int = 10
    config: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        if self.kind not in (DEFAULT, TIME_SHARING, ELIXIR):
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.slot_steps < 1:
            raise ValueError("slot_steps must be >= 1")

    @classmethod
    def default(cls) -> "PolicyKind":
        return cls(DEFAULT)

    @classmethod
    def time_sharing(cls, slot_steps: int = 10, config: AgentConfig | None = None) -> "PolicyKind":
        return cls(TIME_SHARING, slot_steps, config or AgentConfig())

    @classmethod
    def elixir(cls, config: AgentConfig | None = None) -> "PolicyKind":
        return cls(ELIXIR, config=config or AgentConfig())

    @property
    def name(self) -> str:
        return self.kind


@dataclass(frozen=True)
class TraceRow:
    t: int
    policy: str
    phase: str
    settings: CameraSettings
    measurements: FrameMeasurements
    quality: Mapping[str, float]
    detections: Mapping[str, int]
    action: Action


def detection_count(objects: int, accuracy: float, rng: np.random.Generator | None = None) -> int:
    """Expected detections rounded half up, or a binomial draw when ``rng`` is given."""
    p = min(max(accuracy / 100.0, 0.0), 1.0)
    if rng is not None:
        return int(rng.binomial(objects, p))
    return int(math.floor(objects * p + 0.5))


class _Recorder:
    def __init__(self, scenario: ScenarioConfig, policy: str, seed: int, binomial: bool):
        self.scenario = scenario
        self.policy = policy
        self.rows: list[TraceRow] = []
        self.rngs = ({au: np.random.default_rng([seed, zlib.crc32(au.encode()), 0xDE7])
                      for au in scenario.au_names} if binomial else {})

    def add(self, obs: Observation, action: Action) -> None:
        quality = {au.name: true_accuracy(au, obs.settings, obs.phase) for au in self.scenario.au_profiles}
        dets = {name: detection_count(self.scenario.object_count(name, obs.t), q, self.rngs.get(name))
                for name, q in quality.items()}
        self.rows.append(TraceRow(obs.t, self.policy, obs.phase.name, obs.settings, obs.measurements,
                                  quality, dets, Action(action)))


def _estimators(scenario: ScenarioConfig, seed: int, names: Sequence[str] | None = None):
    names = scenario.au_names if names is None else names
    return [SyntheticEstimator(scenario.profile(n), scenario.noise_sigma, seed) for n in names]


def _training_scenario(scenario: ScenarioConfig, steps: int) -> ScenarioConfig:
    """Timeline for offline exploration: every phase gets an equal block."""
    per_phase = max(1, math.ceil(steps / len(scenario.phases)))
    return replace(scenario, steps_per_phase=per_phase)


def explore(agent: MorlAgent, scenario: ScenarioConfig, steps: int) -> CameraSettings:
    """Run the exploration phase on a training timeline; returns the final settings."""
    env = CameraEnvironment(_training_scenario(scenario, steps))
    agent.attach(env.reset())
    agent.explore()
    for _ in range(steps):
        agent.step(env)
    return env.settings


def run_policy(policy: PolicyKind, scenario: ScenarioConfig, seed: int = 0,
               binomial: bool = False, agents: list[MorlAgent] | None = None) -> list[TraceRow]:
    """One trace row per step of ``scenario``'s timeline.

    Learning policies first explore for ``config.explore_steps`` on a training
    copy of the timeline, then run exploitation over the traced timeline.
    Trained agents are appended to ``agents`` when a list is passed.
    """
    rec = _Recorder(scenario, policy.name, seed, binomial)
    steps = scenario.total_steps

    if policy.kind == DEFAULT:
        env = CameraEnvironment(scenario, DEFAULT_SETTINGS)
        obs = env.reset()
        for _ in range(steps):
            rec.add(obs, Action.NoChange)
            obs = env.apply(DEFAULT_SETTINGS)
        return rec.rows

    cfg = policy.config
    if policy.kind == ELIXIR:
        agent = MorlAgent(_estimators(scenario, seed), cfg, seed)
        start = explore(agent, scenario, cfg.explore_steps)
        env = CameraEnvironment(scenario, start)
        agent.attach(env.reset())
        agent.exploit()
        for _ in range(steps):
            obs = agent.observation
            record = agent.step(env)
            rec.add(obs, record.action)
        if agents is not None:
            agents.append(agent)
        return rec.rows

    # time-sharing: one single-objective tuner per AU, warm across slots
    single = replace(cfg, strategy=AggregationStrategy.linear())
    tuners = []
    settings = DEFAULT_SETTINGS
    for i, name in enumerate(scenario.au_names):
        tuner = MorlAgent(_estimators(scenario, seed, [name]), single, seed + 7919 * (i + 1))
        settings = explore(tuner, scenario, cfg.explore_steps)
        tuner.exploit()
        tuners.append(tuner)
    env = CameraEnvironment(scenario, settings)
    obs = env.reset()
    current = None
    for t in range(steps):
        target = target_au(t, policy.slot_steps, len(tuners))
        tuner = tuners[target]
        if target != current:
            tuner.attach(obs)
            current = target
        record = tuner.step(env)
        rec.add(obs, record.action)
        obs = record.observation
    if agents is not None:
        agents.extend(tuners)
    return rec.rows


def target_au(t: int, slot_steps: int, n: int) -> int:
    """Index of the AU the time-sharing policy serves at step ``t``."""
    return (t // slot_steps) % n


# -- trace files -----------------------------------------------------------------

def trace_header(au_names: Sequence[str]) -> list[str]:
    return (["t", "policy", "phase", "b", "c", "co", "s", "mb", "mc", "mco", "ms"]
            + [f"{a}_q" for a in au_names] + [f"{a}_det" for a in au_names] + ["action"])


def write_trace(rows: Sequence[TraceRow], out) -> None:
    """Write rows as CSV to a path or text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_trace(rows, fh)
        return
    au_names = list(rows[0].quality) if rows else []
    w = csv.writer(out, lineterminator="\n")
    w.writerow(trace_header(au_names))
    for r in rows:
        w.writerow([r.t, r.policy, r.phase, *r.settings.as_tuple(), *(repr(float(m)) for m in r.measurements),
                    *(repr(float(r.quality[a])) for a in au_names), *(r.detections[a] for a in au_names),
                    r.action.name])


def trace_to_csv(rows: Sequence[TraceRow]) -> str:
    buf = io.StringIO()
    write_trace(rows, buf)
    return buf.getvalue()


def read_trace(source) -> list[TraceRow]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    q_cols = [h for h in header if h.endswith("_q")]
    au_names = [h[:-2] for h in q_cols]
    if header != trace_header(au_names):
        raise ValueError("unexpected trace header")
    n = len(au_names)
    rows = []
    for rec in reader:
        rows.append(TraceRow(
            t=int(rec[0]), policy=rec[1], phase=rec[2],
            settings=CameraSettings.of(int(v) for v in rec[3:7]),
            measurements=FrameMeasurements(*(float(v) for v in rec[7:11])),
            quality={a: float(v) for a, v in zip(au_names, rec[11:11 + n])},
            detections={a: int(v) for a, v in zip(au_names, rec[11 + n:11 + 2 * n])},
            action=Action[rec[11 + 2 * n]],
        ))
    return rows


# -- summaries ---------------------------------------------------------------------

def _delta(a: int, b: int) -> dict:
    diff = a - b
    pct = None if b == 0 else 100.0 * diff / b
    text = f"{diff:,}" if pct is None else f"{pct:.1f}% ({diff:,})"
    return {"absolute": diff, "percent": pct, "text": text}


@dataclass
class SummaryReport:
    cumulative: dict[str, dict[str, int]]
    totals: dict[str, int]
    mean_quality: dict[str, dict[str, float]]
    mean_aggregate_quality: dict[str, float]
    deltas: dict[str, dict[str, dict[str, dict]]]
    steps: int
    wall_clock: dict[str, float] = field(default_factory=dict)
    strategies: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "cumulative_detections": self.cumulative,
            "total_detections": self.totals,
            "mean_quality": self.mean_quality,
            "mean_aggregate_quality": self.mean_aggregate_quality,
            "deltas": self.deltas,
            "wall_clock_s": self.wall_clock,
            **({"strategies": self.strategies} if self.strategies else {}),
        }


def cumulative_series(rows: Sequence[TraceRow], au: str) -> list[int]:
    out, acc = [], 0
    for r in rows:
        acc += r.detections[au]
        out.append(acc)
    return out


def summarize(traces: Mapping[str, Sequence[TraceRow]], wall_clock: Mapping[str, float] | None = None
              ) -> SummaryReport:
    if not traces:
        raise ValueError("no traces to summarize")
    ranges = {name: [r.t for r in rows] for name, rows in traces.items()}
    first = next(iter(ranges.values()))
    for name, ts in ranges.items():
        if ts != first:
            raise TraceMismatchError(f"trace {name!r} covers a different step range")
    cumulative, totals, mean_q, mean_agg = {}, {}, {}, {}
    for name, rows in traces.items():
        aus = list(rows[0].quality) if rows else []
        cumulative[name] = {a: sum(r.detections[a] for r in rows) for a in aus}
        totals[name] = sum(cumulative[name].values())
        mean_q[name] = {a: (sum(r.quality[a] for r in rows) / len(rows)) if rows else 0.0 for a in aus}
        mean_agg[name] = (sum(sum(r.quality.values()) / len(r.quality) for r in rows) / len(rows)
                          if rows and aus else 0.0)
    deltas: dict = {}
    for a in traces:
        for b in traces:
            if a == b:
                continue
            per = {au: _delta(cumulative[a][au], cumulative[b].get(au, 0)) for au in cumulative[a]}
            per["total"] = _delta(totals[a], totals[b])
            deltas.setdefault(a, {})[b] = per
    return SummaryReport(cumulative, totals, mean_q, mean_agg, deltas, len(first), dict(wall_clock or {}))


def run_policies(scenario: ScenarioConfig, policies: Sequence[PolicyKind], seed: int = 0
                 ) -> tuple[dict[str, list[TraceRow]], SummaryReport]:
    traces, clock = {}, {}
    for policy in policies:
        t0 = time.perf_counter()
        traces[policy.name] = run_policy(policy, scenario, seed)
        clock[policy.name] = time.perf_counter() - t0
    return traces, summarize(traces, clock)


def compare_strategies(scenario: ScenarioConfig, seeds: Sequence[int],
                       config: AgentConfig | None = None) -> SummaryReport:
    """Run the agent once per aggregation strategy per seed; rank by total detections.

    ``mean_aggregate_quality`` uses each strategy's own aggregate, so it is not
    comparable across strategies; ``mean_quality`` (plain mean) is.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    base = config or agent_config(scenario)
    kinds = [StrategyKind.LINEAR, StrategyKind.WEIGHTED, StrategyKind.WINNER_TAKES_ALL]
    merged: dict[str, list[TraceRow]] = {}
    clock: dict[str, float] = {}
    results = []
    for kind in kinds:
        cfg = replace(base, strategy=strategy_for(scenario, kind))
        dets = {a: 0 for a in scenario.au_names}
        quality, plain = [], []
        t0 = time.perf_counter()
        rows_all: list[TraceRow] = []
        for seed in seeds:
            rows = run_policy(PolicyKind.elixir(cfg), scenario, seed)
            rows_all.extend(rows)
            for r in rows:
                for a in dets:
                    dets[a] += r.detections[a]
                quality.append(aggregate(dict(r.quality), cfg.strategy))
                plain.append(sum(r.quality.values()) / len(r.quality))
        clock[kind.value] = time.perf_counter() - t0
        merged[kind.value] = rows_all
        results.append({
            "strategy": kind.value,
            "mean_aggregate_quality": sum(quality) / len(quality),
            "mean_quality": sum(plain) / len(plain),
            "detections": dets,
            "total_detections": sum(dets.values()),
        })
    ranked = sorted(results, key=lambda r: (-r["total_detections"], kinds.index(StrategyKind(r["strategy"]))))
    for rank, r in enumerate(ranked, start=1):
        r["rank"] = rank
    report = summarize(merged, clock)
    report.strategies = ranked
    return report
