"""Shared domain types: camera settings, the action space, settings grids and
state discretization."""

from __future__ import annotations

import enum
import functools
import math
import re
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

SETTING_MIN = 0
SETTING_MAX = 100
DEFAULT_VALUE = 50
DEFAULT_STEP = 10
DEFAULT_BINS = 5

FIELDS = ("brightness", "contrast", "color", "sharpness")


class InvalidStrideError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class CameraSettings:
    brightness: int = DEFAULT_VALUE
    contrast: int = DEFAULT_VALUE
    color: int = DEFAULT_VALUE
    sharpness: int = DEFAULT_VALUE

    def __post_init__(self):
        for name in FIELDS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {v!r}")
            if not SETTING_MIN <= v <= SETTING_MAX:
                raise ValueError(f"{name}={v} outside [{SETTING_MIN}, {SETTING_MAX}]")
            object.__setattr__(self, name, int(v))

    @classmethod
    def of(cls, values) -> "CameraSettings":
        b, c, co, s = values
        return cls(int(b), int(c), int(co), int(s))

    @classmethod
    def parse(cls, text: str) -> "CameraSettings":
        """Parse the canonical ``[b,c,co,s]`` form."""
        m = re.fullmatch(r"\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\]\s*", text)
        if m is None:
            raise ValueError(f"not a settings vector: {text!r}")
        return cls.of(int(g) for g in m.groups())

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.brightness, self.contrast, self.color, self.sharpness)

    def __iter__(self) -> Iterator[int]:
        return iter(self.as_tuple())

    def __str__(self) -> str:
        return "[{},{},{},{}]".format(*self.as_tuple())


DEFAULT_SETTINGS = CameraSettings()


class Action(enum.IntEnum):
    IncreaseBrightness = 0
    DecreaseBrightness = 1
    IncreaseContrast = 2
    DecreaseContrast = 3
    IncreaseColor = 4
    DecreaseColor = 5
    IncreaseSharpness = 6
    DecreaseSharpness = 7
    NoChange = 8

    @property
    def dimension(self) -> int | None:
        if self is Action.NoChange:
            return None
        return int(self) // 2

    @property
    def sign(self) -> int:
        if self is Action.NoChange:
            return 0
        return 1 if int(self) % 2 == 0 else -1

    def opposite(self) -> "Action":
        if self is Action.NoChange:
            return self
        return Action(int(self) ^ 1)


N_ACTIONS = len(Action)


def _clamp(v: int) -> int:
    return SETTING_MIN if v < SETTING_MIN else SETTING_MAX if v > SETTING_MAX else v


def apply_action(settings: CameraSettings, action: Action, step: int = DEFAULT_STEP) -> CameraSettings:
    if step <= 0:
        raise ValueError("step must be positive")
    action = Action(action)
    dim = action.dimension
    if dim is None:
        return settings
    values = list(settings.as_tuple())
    values[dim] = _clamp(values[dim] + action.sign * step)
    return CameraSettings.of(values)


@dataclass(frozen=True)
class SettingsGrid:
    """Settings on a stride-``step`` lattice; the full grid or any subset of it."""

    step: int
    values: tuple[CameraSettings, ...]

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[CameraSettings]:
        return iter(self.values)

    def __contains__(self, item) -> bool:
        return item in self._members

    @functools.cached_property
    def _members(self) -> frozenset:
        return frozenset(self.values)

    @property
    def points_per_axis(self) -> int:
        return SETTING_MAX // self.step + 1

    @property
    def is_full(self) -> bool:
        return len(self.values) == self.points_per_axis ** 4

    def array(self) -> np.ndarray:
        """(n, 4) int array in ``values`` order."""
        if self.is_full:
            axis = np.arange(SETTING_MIN, SETTING_MAX + 1, self.step)
            mesh = np.meshgrid(axis, axis, axis, axis, indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1)
        return np.array([v.as_tuple() for v in self.values], dtype=np.int64).reshape(-1, 4)

    @classmethod
    def of(cls, step: int, values) -> "SettingsGrid":
        """Grid over an explicit set of settings (deduplicated, lexicographic order)."""
        step = check_stride(step)
        values = tuple(sorted(set(values)))
        for v in values:
            if any(x % step for x in v):
                raise InvalidStrideError(f"{v} is not on the stride-{step} lattice")
        return cls(step, values)


def check_stride(step: int) -> int:
    if isinstance(step, bool) or not isinstance(step, (int, np.integer)) or step <= 0 or SETTING_MAX % step:
        raise InvalidStrideError(f"grid stride must be a positive divisor of {SETTING_MAX}, got {step!r}")
    return int(step)


def enumerate_grid(step: int = DEFAULT_STEP) -> SettingsGrid:
    step = check_stride(step)
    axis = range(SETTING_MIN, SETTING_MAX + 1, step)
    values = tuple(CameraSettings(b, c, co, s) for b in axis for c in axis for co in axis for s in axis)
    return SettingsGrid(step, values)


class FrameMeasurements(NamedTuple):
    """Frame statistics, each in [0, 1]."""

    brightness: float
    contrast: float
    color: float
    sharpness: float


class StateKey(NamedTuple):
    setting_bins: tuple[int, int, int, int]
    measurement_bins: tuple[int, int, int, int]

    def flat(self) -> tuple[int, ...]:
        return self.setting_bins + self.measurement_bins

    @classmethod
    def from_flat(cls, values) -> "StateKey":
        values = tuple(int(v) for v in values)
        if len(values) != 8:
            raise ValueError("a state key has 8 integers")
        return cls(values[:4], values[4:])


def _measurement_bin(x: float, bins: int) -> int:
    b = math.floor(x * bins)
    return 0 if b < 0 else bins - 1 if b > bins - 1 else b


def discretize(
    settings: CameraSettings,
    measurements,
    step: int = DEFAULT_STEP,
    bins: int = DEFAULT_BINS,
) -> StateKey:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    # round half up to the nearest grid index
    setting_bins = tuple(math.floor(v / step + 0.5) for v in settings.as_tuple())
    measurement_bins = tuple(_measurement_bin(float(m), bins) for m in measurements)
    return StateKey(setting_bins, measurement_bins)
