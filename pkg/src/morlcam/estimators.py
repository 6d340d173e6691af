"""AU-specific quality estimation.

Each AU gets a synthetic ground-truth accuracy surface (a Gaussian bump over
the settings space, peaked at a per-phase optimum) and a noisy estimator that
plays the role of the learned quality model.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .camsim import Frame, PhaseSpec
from .core import CameraSettings


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class AuProfile:
    """Ground truth for one analytical unit.

    ``width`` is the surface's standard deviation in grid units (one unit is
    10 on the 0-100 settings scale).
    """

    name: str
    optima: Mapping[str, CameraSettings]
    width: float = 3.0
    dimension_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "optima", dict(self.optima))
        object.__setattr__(self, "dimension_weights", tuple(float(w) for w in self.dimension_weights))
        if not self.width > 0:
            raise ValueError(f"{self.name}: width must be > 0")
        if len(self.dimension_weights) != 4 or any(not w > 0 for w in self.dimension_weights):
            raise ValueError(f"{self.name}: need 4 positive dimension weights")
        for s in self.optima.values():
            if not isinstance(s, CameraSettings):
                raise TypeError(f"{self.name}: optima must be CameraSettings")

    def optimum(self, phase: PhaseSpec | str) -> CameraSettings:
        key = phase if isinstance(phase, str) else phase.name
        return self.optima[key]


@dataclass(frozen=True)
class QualityEstimate:
    au: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 100.0:
            raise ValueError(f"score {self.score} outside [0, 100]")


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    sample_count: int

    def to_json(self, au: str) -> dict:
        return {"au": au, "pearson": self.pearson, "spearman": self.spearman, "n": self.sample_count}


def true_accuracy(profile: AuProfile, settings: CameraSettings, phase: PhaseSpec | str) -> float:
    opt = profile.optimum(phase)
    d = 0.0
    for w, v, o in zip(profile.dimension_weights, settings.as_tuple(), opt.as_tuple()):
        x = (v - o) / 10.0
        d += w * (x * x)
    return 100.0 * math.exp(-d / (2.0 * profile.width ** 2))


def true_accuracy_array(profile: AuProfile, settings: np.ndarray, phase: PhaseSpec | str) -> np.ndarray:
    """Vectorized :func:`true_accuracy` over an (n, 4) array of settings.

    The distance is summed dimension by dimension in the scalar order rather
    than with a matmul, whose rounding may differ from row to row.
    """
    opt = np.asarray(profile.optimum(phase).as_tuple(), dtype=np.float64)
    diff = (np.asarray(settings, dtype=np.float64) - opt) / 10.0
    sq = diff * diff
    d = np.zeros(len(sq))
    for k, w in enumerate(profile.dimension_weights):
        d += w * sq[:, k]
    return 100.0 * np.exp(-d / (2.0 * profile.width ** 2))


class QualityEstimator(Protocol):
    name: str

    def estimate(self, frame: Frame | None, settings: CameraSettings, phase: PhaseSpec) -> QualityEstimate:
        ...


def au_stream(seed: int, au: str) -> np.random.Generator:
    """Independent RNG stream for one AU, derived from the run seed."""
    return np.random.default_rng([seed, zlib.crc32(au.encode("utf-8"))])


def estimate(profile: AuProfile, frame: Frame | None, settings: CameraSettings, phase: PhaseSpec,
             noise_sigma: float, rng: np.random.Generator) -> QualityEstimate:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    score = true_accuracy(profile, settings, phase)
    if noise_sigma > 0:
        score = min(max(score + rng.normal(0.0, noise_sigma), 0.0), 100.0)
    return QualityEstimate(profile.name, score)


@dataclass
class SyntheticEstimator:
    """Noisy estimator over the profile's accuracy surface.

    Reads settings and phase only; the frame is accepted so that a
    frame-statistics estimator can be dropped in behind the same interface.
    """

    profile: AuProfile
    noise_sigma: float = 0.0
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = au_stream(self.seed, self.profile.name)

    @property
    def name(self) -> str:
        return self.profile.name

    def estimate(self, frame, settings, phase) -> QualityEstimate:
        return estimate(self.profile, frame, settings, phase, self.noise_sigma, self.rng)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties get the mean of the ranks they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance in one column")
    r = float(dx @ dy) / (sx * sy)
    return max(-1.0, min(1.0, r))


def correlation(pairs) -> CorrelationReport:
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise ValueError("need at least 2 (true, estimated) pairs")
    x, y = arr[:, 0], arr[:, 1]
    pearson = _pearson(x, y)
    spearman = _pearson(average_ranks(x), average_ranks(y))
    return CorrelationReport(pearson, spearman, len(arr))


def evaluate_estimator(profile: AuProfile, phase: PhaseSpec, noise_sigma: float, samples: int,
                       seed: int, step: int = 10) -> CorrelationReport:
    """Correlate noisy estimates with true accuracy on random grid points."""
    rng = np.random.default_rng([seed, 7])
    per_axis = 100 // step + 1
    points = rng.integers(0, per_axis, size=(samples, 4)) * step
    truth = true_accuracy_array(profile, points, phase)
    est = SyntheticEstimator(profile, noise_sigma, seed)
    scores = [est.estimate(None, CameraSettings.of(p), phase).score for p in points]
    return correlation(zip(truth, scores))
