import json
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from morlcam.camsim import load_scenario, preset_names
from morlcam.core import DEFAULT_SETTINGS, Action, CameraSettings, FrameMeasurements
from morlcam.harness import (
    PolicyKind,
    SummaryReport,
    TraceMismatchError,
    TraceRow,
    agent_config,
    compare_strategies,
    cumulative_series,
    detection_count,
    read_trace,
    run_policies,
    run_policy,
    summarize,
    target_au,
    trace_header,
    trace_to_csv,
    write_trace,
)
from morlcam.morl import AgentConfig, AggregationStrategy, RewardMode, StrategyKind

from conftest import make_scenario

FAST = AgentConfig(explore_steps=200)


def two_phase(**kw):
    return make_scenario(phases=(("DAY", 1.0), ("NIGHT", 0.5)), steps_per_phase=30,
                         optima={"A": ["[60,30,40,80]", "[80,40,40,80]"], "B": ["[80,60,50,40]", "[90,60,50,60]"]},
                         counts={"A": (5, 3), "B": (7, 2)}, noise=2.0, **kw)


def row(t, dets, policy="p"):
    return TraceRow(t, policy, "LAB", DEFAULT_SETTINGS, FrameMeasurements(0.5, 0.1, 0.2, 0.3),
                    {a: 50.0 for a in dets}, dict(dets), Action.NoChange)


class TestPolicyKind:
    def test_slot_steps(self):
        with pytest.raises(ValueError):
            PolicyKind.time_sharing(0)

    def test_unknown(self):
        with pytest.raises(ValueError):
            PolicyKind("random")


class TestDetections:
    @pytest.mark.parametrize("n,acc,want", [(4, 62.5, 3), (4, 62.4, 2), (0, 100, 0), (10, 100, 10),
                                            (3, 0, 0), (1, 50, 1)])
    def test_round_half_up(self, n, acc, want):
        assert detection_count(n, acc) == want

    def test_binomial_mode_bounded(self):
        import numpy as np
        rng = np.random.default_rng(0)
        draws = [detection_count(10, 70, rng) for _ in range(500)]
        assert min(draws) >= 0 and max(draws) <= 10
        assert abs(sum(draws) / 500 - 7) < 0.5


class TestRunPolicy:
    def test_default_never_changes(self):
        sc = two_phase()
        rows = run_policy(PolicyKind.default(), sc, 0)
        assert len(rows) == sc.total_steps
        assert [r.t for r in rows] == list(range(sc.total_steps))
        assert {r.settings for r in rows} == {DEFAULT_SETTINGS}
        assert {r.action for r in rows} == {Action.NoChange}
        assert [r.phase for r in rows] == ["DAY"] * 30 + ["NIGHT"] * 30

    def test_slot_schedule(self):
        changes = [t for t in range(1, 60) if target_au(t, 10, 3) != target_au(t - 1, 10, 3)]
        assert changes == [10, 20, 30, 40, 50]
        assert [target_au(t, 10, 3) for t in (0, 9, 10, 25, 30)] == [0, 0, 1, 2, 0]

    @pytest.mark.parametrize("policy", [PolicyKind.default(), PolicyKind.time_sharing(5, FAST),
                                        PolicyKind.elixir(FAST)], ids=lambda p: p.kind)
    def test_byte_identical(self, policy):
        sc = two_phase()
        assert trace_to_csv(run_policy(policy, sc, 3)) == trace_to_csv(run_policy(policy, sc, 3))

    def test_seed_matters(self):
        sc = two_phase()
        assert trace_to_csv(run_policy(PolicyKind.elixir(FAST), sc, 1)) != \
            trace_to_csv(run_policy(PolicyKind.elixir(FAST), sc, 2))

    def test_rows_consistent(self):
        sc = two_phase()
        for r in run_policy(PolicyKind.elixir(FAST), sc, 0):
            for au in sc.au_names:
                assert r.detections[au] >= 0
                assert r.detections[au] == detection_count(sc.object_count(au, r.t), r.quality[au])

    def test_actions_explain_settings(self):
        from morlcam.core import apply_action
        sc = two_phase()
        cfg = FAST
        rows = run_policy(PolicyKind.elixir(cfg), sc, 0)
        for prev, nxt in zip(rows, rows[1:]):
            assert apply_action(prev.settings, prev.action, cfg.step) == nxt.settings

    def test_agents_returned(self):
        sc = two_phase()
        agents = []
        run_policy(PolicyKind.time_sharing(10, FAST), sc, 0, agents=agents)
        assert [tuple(a.estimators) for a in agents] == [("A",), ("B",)]

    def test_identical_profiles_timesharing_matches_linear(self):
        sc = load_scenario("stationary")
        p = sc.au_profiles[0]
        twin = replace(sc, au_profiles=(p, replace(p, name="FD2")), object_counts={"FD": (6,), "FD2": (6,)},
                       priorities={})
        cfg = agent_config(twin, strategy="linear", explore_steps=10000)
        modes = []
        for policy in (PolicyKind.elixir(cfg), PolicyKind.time_sharing(10, cfg)):
            rows = run_policy(policy, twin, 0)
            modes.append(Counter(r.settings for r in rows).most_common(1)[0][0])
        assert modes[0] == modes[1] == p.optimum("LAB")

    @pytest.mark.parametrize("name", preset_names())
    def test_elixir_beats_default_quality(self, name):
        sc = load_scenario(name)
        traces, report = run_policies(sc, [PolicyKind.default(), PolicyKind.elixir(agent_config(sc))], 0)
        mean = {k: sum(v.values()) / len(v) for k, v in report.mean_quality.items()}
        assert mean["elixir"] >= mean["default"]


class TestTraceFiles:
    def test_header(self):
        assert trace_header(["PD", "FD"]) == ["t", "policy", "phase", "b", "c", "co", "s", "mb", "mc", "mco", "ms",
                                              "PD_q", "FD_q", "PD_det", "FD_det", "action"]

    def test_roundtrip(self, tmp_path):
        sc = two_phase()
        rows = run_policy(PolicyKind.elixir(FAST), sc, 0)
        path = tmp_path / "t.csv"
        write_trace(rows, path)
        assert path.read_text().splitlines()[0] == ",".join(trace_header(sc.au_names))
        back = read_trace(path)
        assert back == rows
        assert summarize({"x": back}).to_json() == summarize({"x": rows}).to_json()

    def test_bad_header(self):
        with pytest.raises(ValueError):
            read_trace("a,b,c\n1,2,3\n")


class TestSummarize:
    def test_summation(self):
        rep = summarize({"p": [row(0, {"A": 1}), row(1, {"A": 2}), row(2, {"A": 3})]})
        assert rep.cumulative == {"p": {"A": 6}} and rep.totals == {"p": 6}

    def test_zero_objects(self):
        sc = two_phase(priorities={})
        sc = replace(sc, object_counts={"A": (0, 0), "B": (0, 0)})
        traces = {"default": run_policy(PolicyKind.default(), sc, 0),
                  "elixir": run_policy(PolicyKind.elixir(FAST), sc, 0)}
        rep = summarize(traces)
        assert all(v == 0 for c in rep.cumulative.values() for v in c.values())
        assert rep.deltas["elixir"]["default"]["total"] == {"absolute": 0, "percent": None, "text": "0"}

    def test_mismatched_ranges(self):
        with pytest.raises(TraceMismatchError):
            summarize({"a": [row(0, {"A": 1})], "b": [row(0, {"A": 1}), row(1, {"A": 1})]})

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize({})

    def test_delta_format(self):
        base = [row(0, {"CD": 310_811})]
        better = [row(0, {"CD": 310_811 + 22_068})]
        d = summarize({"elixir": better, "default": base}).deltas["elixir"]["default"]["CD"]
        assert d["absolute"] == 22_068
        assert d["text"] == "7.1% (22,068)"
        assert d["percent"] == pytest.approx(100 * 22_068 / 310_811)

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=40))
    def test_cumulative_is_column_sum_and_monotone(self, counts):
        rows = [row(t, {"A": c}) for t, c in enumerate(counts)]
        series = cumulative_series(rows, "A")
        assert series[-1] == sum(counts) == summarize({"p": rows}).cumulative["p"]["A"]
        assert all(b >= a for a, b in zip(series, series[1:]))

    def test_json_serializable(self):
        sc = two_phase()
        _, rep = run_policies(sc, [PolicyKind.default(), PolicyKind.elixir(FAST)], 0)
        data = json.loads(json.dumps(rep.to_json()))
        assert set(data["wall_clock_s"]) == {"default", "elixir"}
        assert isinstance(rep, SummaryReport)


class TestCompareStrategies:
    def test_each_strategy_once_and_ranked(self):
        sc = two_phase(priorities={"A": 3, "B": 1})
        rep = compare_strategies(sc, [0], FAST)
        assert sorted(r["strategy"] for r in rep.strategies) == sorted(k.value for k in StrategyKind)
        assert [r["rank"] for r in rep.strategies] == [1, 2, 3]
        totals = [r["total_detections"] for r in rep.strategies]
        assert totals == sorted(totals, reverse=True)

    def test_single_au_identical(self):
        sc = make_scenario(optima={"A": ["[70,40,60,80]"]}, steps_per_phase=40, noise=2.0)
        rep = compare_strategies(sc, [0, 1], FAST)
        vals = {(r["total_detections"], r["mean_quality"]) for r in rep.strategies}
        assert len(vals) == 1

    def test_needs_seed(self):
        with pytest.raises(ValueError):
            compare_strategies(two_phase(), [], FAST)


class TestAgentConfig:
    def test_scenario_block_and_overrides(self):
        sc = load_scenario("drift4")
        cfg = agent_config(sc)
        assert cfg.step == 25 and cfg.reward_mode is RewardMode.RAW
        assert cfg.strategy == AggregationStrategy.winner_takes_all()
        cfg2 = agent_config(sc, strategy="weighted", explore_steps=7)
        assert cfg2.strategy.weights == {"PD": 1.0, "FD": 3.0, "CD": 1.0, "LPD": 2.0}
        assert cfg2.explore_steps == 7
