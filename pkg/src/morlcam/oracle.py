"""Brute-force ground truth over settings grids: per-AU optimal
configuration, cross-AU conflict matrices, the common-optimal setting, and
the best post-capture digital transform."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camsim import PhaseSpec
from .core import DEFAULT_SETTINGS, CameraSettings, SettingsGrid
from .estimators import AuProfile, true_accuracy, true_accuracy_array
from .morl import AggregationStrategy, ConfigurationError, aggregate, aggregate_array


@dataclass(frozen=True)
class OracleResult:
    best_settings: CameraSettings
    primary_score: float
    secondary_score: float
    evaluations: int

    def to_json(self) -> dict:
        return {
            "best_settings": str(self.best_settings),
            "primary_score": self.primary_score,
            "secondary_score": self.secondary_score,
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class ConflictMatrix:
    """``entries[i][j]``: accuracy of AU j at AU i's optimal settings."""

    names: tuple[str, ...]
    optima: tuple[CameraSettings, ...]
    entries: tuple[tuple[float, ...], ...]

    def to_json(self) -> dict:
        return {
            "aus": list(self.names),
            "optima": [str(s) for s in self.optima],
            "entries": [list(row) for row in self.entries],
        }

    def to_text(self) -> str:
        header = ["Optimal setting"] + [f"{n} accuracy" for n in self.names]
        rows = [[f"{n} {s}"] + [f"{v:.1f}" for v in row]
                for n, s, row in zip(self.names, self.optima, self.entries)]
        return format_table(header, rows)


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = "+".join("-" * (w + 2) for w in widths)

    def fmt(cells):
        return " " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " "

    out = [line, fmt(header), line, *(fmt(r) for r in rows)]
    out.append(line)
    return "\n".join(out)


def neighborhood_mean(primary: np.ndarray, grid: SettingsGrid) -> np.ndarray:
    """Mean primary score over each point's axis neighbours (up to 8 in 4-D).

    Points with no neighbour in the grid keep their own primary score.
    """
    primary = np.asarray(primary, dtype=np.float64)
    if not grid.is_full:
        return _sparse_neighborhood_mean(primary, grid)
    n = grid.points_per_axis
    cube = primary.reshape((n,) * 4)
    acc = np.zeros_like(cube)
    cnt = np.zeros_like(cube)
    for axis in range(4):
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        acc[lo] += cube[hi]
        cnt[lo] += 1
        acc[hi] += cube[lo]
        cnt[hi] += 1
    out = np.where(cnt > 0, acc / np.maximum(cnt, 1), cube)
    return out.ravel()


def _sparse_neighborhood_mean(primary: np.ndarray, grid: SettingsGrid) -> np.ndarray:
    index = {v.as_tuple(): i for i, v in enumerate(grid.values)}
    out = primary.copy()
    for i, v in enumerate(grid.values):
        base = v.as_tuple()
        vals = []
        for axis in range(4):
            for d in (-grid.step, grid.step):
                nb = base[:axis] + (base[axis] + d,) + base[axis + 1:]
                j = index.get(nb)
                if j is not None:
                    vals.append(primary[j])
        if vals:
            out[i] = sum(vals) / len(vals)
    return out


# Scores within this distance (on the 0-100 scale) count as tied. Points that
# are mathematically tied, e.g. mirrored about an optimum, otherwise get ranked
# by last-ulp rounding noise of exp and of the neighbour summation order.
TIE_TOLERANCE = 1e-9


def best_index(primary: np.ndarray, secondary: np.ndarray, tol: float = TIE_TOLERANCE) -> int:
    """Highest primary, then highest secondary among primary ties, then first in
    grid (lexicographic) order."""
    primary, secondary = np.asarray(primary), np.asarray(secondary)
    tied = primary >= primary.max() - tol
    tied &= secondary >= secondary[tied].max() - tol
    return int(np.flatnonzero(tied)[0])


def _select(grid: SettingsGrid, points: np.ndarray, primary: np.ndarray) -> OracleResult:
    secondary = neighborhood_mean(primary, grid)
    best = best_index(primary, secondary)
    return OracleResult(CameraSettings.of(points[best]), float(primary[best]), float(secondary[best]),
                        len(primary))


def find_best_conf(profile: AuProfile, phase: PhaseSpec | str, grid: SettingsGrid) -> OracleResult:
    if len(grid) == 0:
        raise ValueError("empty grid")
    points = grid.array()
    return _select(grid, points, true_accuracy_array(profile, points, phase))


def conflict_matrix(profiles: Sequence[AuProfile], phase: PhaseSpec | str,
                    grid: SettingsGrid) -> ConflictMatrix:
    if len(profiles) < 2:
        raise ValueError("a conflict matrix needs at least 2 profiles")
    optima = tuple(find_best_conf(p, phase, grid).best_settings for p in profiles)
    entries = tuple(tuple(true_accuracy(pj, s, phase) for pj in profiles) for s in optima)
    return ConflictMatrix(tuple(p.name for p in profiles), optima, entries)


def aggregate_scores(profiles: Sequence[AuProfile], settings: CameraSettings, phase,
                     strategy: AggregationStrategy) -> float:
    return aggregate({p.name: true_accuracy(p, settings, phase) for p in profiles}, strategy)


def common_optimal(profiles: Sequence[AuProfile], phase: PhaseSpec | str, grid: SettingsGrid,
                   strategy: AggregationStrategy) -> OracleResult:
    if not profiles or len(grid) == 0:
        raise ValueError("need profiles and a non-empty grid")
    points = grid.array()
    columns = {p.name: true_accuracy_array(p, points, phase) for p in profiles}
    return _select(grid, points, aggregate_array(columns, strategy))


def best_post_transform(captured: CameraSettings, profile: AuProfile, phase: PhaseSpec | str,
                        transform_grid: SettingsGrid) -> tuple[CameraSettings, float]:
    """Best digital transform for one AU on a frame captured at ``captured``.

    Composition is modelled as effective = clamp(captured + transform - 50).
    Ties prefer the transform closest to identity, then lexicographic order.
    """
    if DEFAULT_SETTINGS not in transform_grid:
        raise ConfigurationError("transform grid must contain the identity [50,50,50,50]")
    transforms = transform_grid.array()
    effective = np.clip(np.asarray(captured.as_tuple()) + transforms - 50, 0, 100)
    scores = true_accuracy_array(profile, effective, phase)
    distance = np.abs(transforms - 50).sum(axis=1)
    tied = scores >= scores.max() - TIE_TOLERANCE
    tied &= distance == distance[tied].min()
    best = int(np.flatnonzero(tied)[0])
    return CameraSettings.of(transforms[best]), float(scores[best])
