"""Single-policy multi-objective Q-learning.

One sparse Q-table per AU plus an aggregate table. Each step the agent picks
an action from the aggregate table, moves the camera, scores the new frame
with every AU's quality estimator, runs a Bellman update on each AU table and
writes the scalarized value into the aggregate table.

Note on epsilon: here epsilon is the probability of taking the *greedy*
action (a uniform draw above epsilon triggers a random action). Exploration
therefore uses a small epsilon (0.1) and exploitation a large one (0.9).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .camsim import Observation
from .core import (
    DEFAULT_BINS,
    DEFAULT_STEP,
    N_ACTIONS,
    Action,
    StateKey,
    apply_action,
    discretize,
)

AGGREGATE_NAME = "AGG"
_FILE_MAGIC = "# morlcam q-tables v1"


class ConfigurationError(ValueError):
    pass


class MalformedTableError(ValueError):
    pass


class QTable:
    """Sparse (state, action) -> value map; absent entries read as 0.0."""

    __slots__ = ("_q",)

    def __init__(self, entries: Mapping[tuple[StateKey, int], float] | None = None):
        self._q: dict[tuple[StateKey, int], float] = {}
        if entries:
            for (s, a), v in entries.items():
                self.set(s, a, v)

    def get(self, state: StateKey, action: int) -> float:
        return self._q.get((state, int(action)), 0.0)

    def set(self, state: StateKey, action: int, value: float) -> None:
        self._q[(state, int(action))] = float(value)

    def values(self, state: StateKey) -> list[float]:
        q = self._q
        return [q.get((state, a), 0.0) for a in range(N_ACTIONS)]

    def max_value(self, state: StateKey) -> float:
        return max(self.values(state))

    def best_action(self, state: StateKey) -> Action:
        vals = self.values(state)
        best = 0
        for a in range(1, N_ACTIONS):
            if vals[a] > vals[best]:
                best = a
        return Action(best)

    def items(self):
        return self._q.items()

    def states(self) -> set[StateKey]:
        return {s for s, _ in self._q}

    def __len__(self) -> int:
        return len(self._q)

    def __eq__(self, other) -> bool:
        return isinstance(other, QTable) and self._q == other._q

    def __repr__(self) -> str:
        return f"QTable({len(self._q)} entries)"


@dataclass
class QTableSet:
    per_au: dict[str, QTable]
    aggregate: QTable = field(default_factory=QTable)

    @classmethod
    def empty(cls, au_names: Iterable[str]) -> "QTableSet":
        return cls({name: QTable() for name in au_names}, QTable())

    @property
    def au_names(self) -> tuple[str, ...]:
        return tuple(self.per_au)

    def __len__(self) -> int:
        return len(self.per_au) + 1


class StrategyKind(str, enum.Enum):
    LINEAR = "linear"
    WEIGHTED = "weighted"
    WINNER_TAKES_ALL = "winner-takes-all"


@dataclass(frozen=True)
class AggregationStrategy:
    kind: StrategyKind = StrategyKind.LINEAR
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "weights", dict(self.weights))
        if any(not w > 0 for w in self.weights.values()):
            raise ConfigurationError("aggregation weights must be positive")

    @classmethod
    def linear(cls) -> "AggregationStrategy":
        return cls(StrategyKind.LINEAR)

    @classmethod
    def weighted(cls, weights: Mapping[str, float]) -> "AggregationStrategy":
        return cls(StrategyKind.WEIGHTED, weights)

    @classmethod
    def winner_takes_all(cls) -> "AggregationStrategy":
        return cls(StrategyKind.WINNER_TAKES_ALL)

    def check(self, au_names: Iterable[str]) -> None:
        if self.kind is StrategyKind.WEIGHTED:
            missing = [n for n in au_names if n not in self.weights]
            if missing:
                raise ConfigurationError(f"weighted aggregation: no weight for {missing}")

    def __str__(self) -> str:
        return self.kind.value


def aggregate(per_au_values: Mapping[str, float], strategy: AggregationStrategy) -> float:
    if not per_au_values:
        raise ValueError("nothing to aggregate")
    kind = strategy.kind
    if kind is StrategyKind.LINEAR:
        return sum(per_au_values.values()) / len(per_au_values)
    if kind is StrategyKind.WINNER_TAKES_ALL:
        return max(per_au_values.values())
    strategy.check(per_au_values)
    num = sum(strategy.weights[k] * v for k, v in per_au_values.items())
    den = sum(strategy.weights[k] for k in per_au_values)
    return num / den


def aggregate_array(columns: Mapping[str, np.ndarray], strategy: AggregationStrategy) -> np.ndarray:
    """Column-wise :func:`aggregate` for vectors of per-AU values."""
    names = list(columns)
    stacked = np.stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    if strategy.kind is StrategyKind.LINEAR:
        return stacked.sum(axis=0) / len(names)
    if strategy.kind is StrategyKind.WINNER_TAKES_ALL:
        return stacked.max(axis=0)
    strategy.check(names)
    w = np.asarray([strategy.weights[n] for n in names])
    return (w[:, None] * stacked).sum(axis=0) / w.sum()


def bellman_update(q: float, r: float, max_next: float, alpha: float, gamma: float) -> float:
    return q + alpha * (r + gamma * max_next - q)


def choose_action(table: QTable, state: StateKey, epsilon: float, rng: np.random.Generator) -> Action:
    if rng.random() > epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    return table.best_action(state)


class RewardMode(str, enum.Enum):
    DELTA = "delta"
    RAW = "raw"


@dataclass(frozen=True)
class AgentConfig:
    alpha_explore: float = 0.8
    alpha_exploit: float = 0.2
    epsilon_explore: float = 0.1
    epsilon_exploit: float = 0.9
    gamma: float = 0.9
    explore_steps: int = 1000
    step: int = DEFAULT_STEP
    bins: int = DEFAULT_BINS
    strategy: AggregationStrategy = field(default_factory=AggregationStrategy.linear)
    reward_mode: RewardMode = RewardMode.DELTA

    def __post_init__(self):
        object.__setattr__(self, "reward_mode", RewardMode(self.reward_mode))
        for name in ("alpha_explore", "alpha_exploit", "epsilon_explore", "epsilon_exploit", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if self.explore_steps < 1:
            raise ConfigurationError("explore_steps must be >= 1")
        if self.step <= 0 or self.bins < 2:
            raise ConfigurationError("step must be > 0 and bins >= 2")

    def with_(self, **changes) -> "AgentConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TransitionRecord:
    t: int
    state: StateKey
    action: Action
    next_state: StateKey
    rewards: dict[str, float]
    qualities: dict[str, float]
    aggregate_value: float
    observation: Observation = field(compare=False, repr=False)


class MorlAgent:
    """Algorithm-1 agent over a set of quality estimators (one per AU)."""

    def __init__(self, estimators: Sequence, config: AgentConfig | None = None, seed: int = 0,
                 tables: QTableSet | None = None):
        self.config = config or AgentConfig()
        self.estimators = {e.name: e for e in estimators}
        if not self.estimators:
            raise ConfigurationError("need at least one AU")
        self.config.strategy.check(self.estimators)
        self.tables = tables if tables is not None else QTableSet.empty(self.estimators)
        if set(self.tables.au_names) != set(self.estimators):
            raise ConfigurationError("Q-table AUs do not match estimators")
        self.rng = np.random.default_rng([seed, 0x51A7E])
        self.alpha = self.config.alpha_explore
        self.epsilon = self.config.epsilon_explore
        self.state: StateKey | None = None
        self.quality: dict[str, float] = {}
        self.observation: Observation | None = None

    def explore(self) -> None:
        self.alpha, self.epsilon = self.config.alpha_explore, self.config.epsilon_explore

    def exploit(self) -> None:
        self.alpha, self.epsilon = self.config.alpha_exploit, self.config.epsilon_exploit

    def _score(self, obs: Observation) -> dict[str, float]:
        return {name: est.estimate(obs.frame, obs.settings, obs.phase).score
                for name, est in self.estimators.items()}

    def key(self, obs: Observation) -> StateKey:
        return discretize(obs.settings, obs.measurements, self.config.step, self.config.bins)

    def attach(self, obs: Observation) -> None:
        """Take ``obs`` as the current state (start of a run, or a hand-over)."""
        self.observation = obs
        self.state = self.key(obs)
        self.quality = self._score(obs)

    def greedy_action(self, state: StateKey | None = None) -> Action:
        return self.tables.aggregate.best_action(self.state if state is None else state)

    def step(self, env) -> TransitionRecord:
        if self.state is None:
            self.attach(env.reset())
        cfg = self.config
        s = self.state
        a = choose_action(self.tables.aggregate, s, self.epsilon, self.rng)
        obs = env.apply(apply_action(self.observation.settings, a, cfg.step))
        s2 = self.key(obs)
        q2 = self._score(obs)
        rewards = {}
        updated = {}
        for name, table in self.tables.per_au.items():
            r = q2[name] - self.quality[name] if cfg.reward_mode is RewardMode.DELTA else q2[name]
            rewards[name] = r
            v = bellman_update(table.get(s, a), r, table.max_value(s2), self.alpha, cfg.gamma)
            table.set(s, a, v)
            updated[name] = v
        agg = aggregate(updated, cfg.strategy)
        self.tables.aggregate.set(s, a, agg)
        self.state, self.quality, self.observation = s2, q2, obs
        return TransitionRecord(obs.t, s, a, s2, rewards, q2, agg, obs)


def run(agent: MorlAgent, env, explore_steps: int, exploit_steps: int) -> list[TransitionRecord]:
    """``explore_steps`` steps with exploration rates, then ``exploit_steps`` greedy-leaning steps."""
    if explore_steps < 0 or exploit_steps < 0:
        raise ValueError("step counts must be >= 0")
    if agent.state is None:
        agent.attach(env.reset())
    trace = []
    agent.explore()
    for _ in range(explore_steps):
        trace.append(agent.step(env))
    agent.exploit()
    for _ in range(exploit_steps):
        trace.append(agent.step(env))
    return trace


# -- persistence ---------------------------------------------------------------

def dump_tables(tables: QTableSet) -> str:
    for name in tables.au_names:
        if not name or any(ch.isspace() for ch in name) or name == AGGREGATE_NAME or "," in name:
            raise ValueError(f"AU name {name!r} cannot be stored")
    lines = [_FILE_MAGIC, "# aus: " + ",".join(tables.au_names)]
    records = []
    for name, table in list(tables.per_au.items()) + [(AGGREGATE_NAME, tables.aggregate)]:
        for (s, a), v in table.items():
            records.append(((name,) + s.flat() + (a,), v))
    records.sort(key=lambda item: item[0])
    for key, v in records:
        lines.append(" ".join(str(k) for k in key) + " " + repr(v))
    return "\n".join(lines) + "\n"


def parse_tables(text: str) -> QTableSet:
    lines = text.splitlines()
    if len(lines) < 2 or lines[0] != _FILE_MAGIC or not lines[1].startswith("# aus:"):
        raise MalformedTableError("missing q-table header")
    names_field = lines[1][len("# aus:"):].strip()
    names = names_field.split(",") if names_field else []
    tables = QTableSet.empty(names)
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) != 11:
            raise MalformedTableError(f"line {lineno}: expected 11 fields, got {len(parts)}")
        name = parts[0]
        if name == AGGREGATE_NAME:
            table = tables.aggregate
        elif name in tables.per_au:
            table = tables.per_au[name]
        else:
            raise MalformedTableError(f"line {lineno}: unknown table {name!r}")
        try:
            state = StateKey.from_flat(parts[1:9])
            action = int(parts[9])
            value = float(parts[10])
        except ValueError as exc:
            raise MalformedTableError(f"line {lineno}: {exc}") from exc
        if not 0 <= action < N_ACTIONS:
            raise MalformedTableError(f"line {lineno}: action {action} out of range")
        table.set(state, action, value)
    return tables


def save_tables(tables: QTableSet, path) -> None:
    Path(path).write_text(dump_tables(tables), encoding="utf-8")


def load_tables(path) -> QTableSet:
    return parse_tables(Path(path).read_text(encoding="utf-8"))
