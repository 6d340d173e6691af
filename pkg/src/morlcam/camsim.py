"""Simulated camera: procedural scenes on a phase timeline, the four
enhancement transforms induced by camera settings, and frame statistics."""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np

from . import _kernels
from .core import DEFAULT_SETTINGS, CameraSettings, FrameMeasurements

if TYPE_CHECKING:
    from .estimators import AuProfile


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    ambient: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.ambient <= 1.0:
            raise ScenarioError(f"phase {self.name!r}: ambient must be in (0, 1], got {self.ambient}")


@dataclass(frozen=True)
class ScenarioConfig:
    """A phase timeline plus the AUs watching it.

    ``object_counts`` maps AU name to one count per phase. ``priorities`` are
    the per-AU weights used by the weighted aggregation strategy. ``agent``
    holds learning-config overrides that suit the scenario (stride, reward
    mode, exploration length).
    """

    phases: tuple[PhaseSpec, ...]
    steps_per_phase: int
    seed: int
    image_size: int
    au_profiles: tuple["AuProfile", ...]
    object_counts: Mapping[str, tuple[int, ...]]
    noise_sigma: float = 2.0
    priorities: Mapping[str, float] = field(default_factory=dict)
    name: str = "scenario"
    agent: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "au_profiles", tuple(self.au_profiles))
        object.__setattr__(self, "object_counts",
                           {k: tuple(int(c) for c in v) for k, v in self.object_counts.items()})
        object.__setattr__(self, "priorities", {k: float(v) for k, v in self.priorities.items()})
        object.__setattr__(self, "agent", dict(self.agent))
        if not self.phases:
            raise ScenarioError("at least one phase is required")
        if self.steps_per_phase < 1:
            raise ScenarioError("steps_per_phase must be >= 1")
        if self.image_size < 8:
            raise ScenarioError("image_size must be >= 8")
        if self.noise_sigma < 0:
            raise ScenarioError("noise_sigma must be >= 0")
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise ScenarioError("phase names must be unique")
        au_names = [a.name for a in self.au_profiles]
        if len(set(au_names)) != len(au_names):
            raise ScenarioError("AU names must be unique")
        for au in self.au_profiles:
            missing = [n for n in names if n not in au.optima]
            if missing:
                raise ScenarioError(f"AU {au.name}: no optimum for phase(s) {missing}")
        for name in au_names:
            counts = self.object_counts.get(name)
            if counts is None or len(counts) != len(self.phases):
                raise ScenarioError(f"AU {name}: need one object count per phase")
            if any(c < 0 for c in counts):
                raise ScenarioError(f"AU {name}: object counts must be >= 0")
        for name, p in self.priorities.items():
            if name not in au_names:
                raise ScenarioError(f"priority for unknown AU {name!r}")
            if p <= 0:
                raise ScenarioError(f"priority for {name!r} must be positive")

    @property
    def au_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.au_profiles)

    @property
    def total_steps(self) -> int:
        return self.steps_per_phase * len(self.phases)

    def phase_index(self, t: int) -> int:
        return min(t // self.steps_per_phase, len(self.phases) - 1)

    def phase_at(self, t: int) -> PhaseSpec:
        return self.phases[self.phase_index(t)]

    def profile(self, name: str) -> "AuProfile":
        for au in self.au_profiles:
            if au.name == name:
                return au
        raise KeyError(name)

    def object_count(self, au: str, t: int) -> int:
        return self.object_counts[au][self.phase_index(t)]


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("frame pixels must be H x W x 3")
        if px is self.pixels:
            px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@functools.lru_cache(maxsize=64)
def _phase_layers(seed: int, phase_index: int, size: int, n_objects: int):
    """Background gradient plus an object layer and its mask for one phase."""
    ys, xs = np.mgrid[0:size, 0:size] / (size - 1)
    background = np.stack([0.25 + 0.5 * xs, 0.25 + 0.5 * ys, 0.55 - 0.2 * xs * ys], axis=2)
    rng = np.random.default_rng([seed, phase_index])
    layer = np.zeros((size, size, 3))
    mask = np.zeros((size, size), dtype=bool)
    max_side = max(2, size // 4)
    for _ in range(n_objects):
        h, w = rng.integers(2, max_side + 1, size=2)
        y, x = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        layer[y:y + h, x:x + w] = rng.uniform(0.05, 0.95, size=3)
        mask[y:y + h, x:x + w] = True
    for arr in (background, layer, mask):
        arr.flags.writeable = False
    return background, layer, mask


def scene_at(scenario: ScenarioConfig, t: int, ambient_override: float | None = None):
    """Latent (pre-capture) frame at step ``t`` and the active phase.

    Objects drift horizontally one pixel per step with wrap-around, so the
    global statistics of a phase stay (almost) constant while the content moves.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    idx = scenario.phase_index(t)
    phase = scenario.phases[idx]
    n_objects = sum(counts[idx] for counts in scenario.object_counts.values())
    background, layer, mask = _phase_layers(scenario.seed, idx, scenario.image_size, n_objects)
    shift = t % scenario.image_size
    rolled_mask = np.roll(mask, shift, axis=1)
    img = np.where(rolled_mask[..., None], np.roll(layer, shift, axis=1), background)
    ambient = phase.ambient if ambient_override is None else ambient_override
    return Frame(img * ambient, timestamp=t), phase


def capture(latent: Frame, settings: CameraSettings) -> Frame:
    """Apply brightness, contrast, color and sharpness enhancement, in that order."""
    px = _kernels.capture(latent.pixels, *settings.as_tuple())
    return Frame(px, timestamp=latent.timestamp)


def measure(frame: Frame) -> FrameMeasurements:
    return FrameMeasurements(*_kernels.measure(frame.pixels))


def write_ppm(frame: Frame, path) -> None:
    """Dump a frame as binary PPM (P6) for debugging."""
    px = np.clip(np.rint(np.asarray(frame.pixels) * 255.0), 0, 255).astype(np.uint8)
    h, w = px.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PPM")
    w, h, maxval = (int(g) for g in m.groups())
    raw = np.frombuffer(data[m.end():m.end() + w * h * 3], dtype=np.uint8)
    return raw.reshape(h, w, 3).astype(np.float64) / maxval


@dataclass(frozen=True)
class Observation:
    t: int
    settings: CameraSettings
    measurements: FrameMeasurements
    phase: PhaseSpec
    frame: Frame | None = None


class CameraEnvironment:
    """In-process camera on a scenario timeline.

    Every ``apply`` sets new settings, advances one step and captures.
    """

    def __init__(self, scenario: ScenarioConfig, settings: CameraSettings = DEFAULT_SETTINGS,
                 start: int = 0):
        self.scenario = scenario
        self.settings = settings
        self.t = start

    def observe(self) -> Observation:
        latent, phase = scene_at(self.scenario, self.t)
        frame = capture(latent, self.settings)
        return Observation(self.t, self.settings, measure(frame), phase, frame)

    def reset(self) -> Observation:
        return self.observe()

    def apply(self, settings: CameraSettings) -> Observation:
        self.settings = settings
        self.t += 1
        return self.observe()


# -- scenario files ----------------------------------------------------------

def scenario_to_dict(scenario: ScenarioConfig) -> dict:
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "image_size": scenario.image_size,
        "steps_per_phase": scenario.steps_per_phase,
        "noise_sigma": scenario.noise_sigma,
        "phases": [{"name": p.name, "ambient": p.ambient} for p in scenario.phases],
        "aus": [
            {
                "name": au.name,
                "width": au.width,
                "weights": list(au.dimension_weights),
                "optima": {ph: str(s) for ph, s in au.optima.items()},
                "objects": list(scenario.object_counts[au.name]),
                **({"priority": scenario.priorities[au.name]} if au.name in scenario.priorities else {}),
            }
            for au in scenario.au_profiles
        ],
        **({"agent": dict(scenario.agent)} if scenario.agent else {}),
    }


def scenario_from_dict(data: dict) -> ScenarioConfig:
    from .estimators import AuProfile

    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    try:
        phases = [PhaseSpec(str(p["name"]), float(p.get("ambient", 1.0))) for p in data["phases"]]
        aus, counts, priorities = [], {}, {}
        for entry in data["aus"]:
            name = str(entry["name"])
            aus.append(AuProfile(
                name=name,
                optima={str(k): CameraSettings.parse(v) if isinstance(v, str) else CameraSettings.of(v)
                        for k, v in entry["optima"].items()},
                width=float(entry.get("width", 3.0)),
                dimension_weights=tuple(float(w) for w in entry.get("weights", (1, 1, 1, 1))),
            ))
            counts[name] = tuple(int(c) for c in entry["objects"])
            if "priority" in entry:
                priorities[name] = float(entry["priority"])
        return ScenarioConfig(
            phases=tuple(phases),
            steps_per_phase=int(data["steps_per_phase"]),
            seed=int(data["seed"]),
            image_size=int(data.get("image_size", 32)),
            au_profiles=tuple(aus),
            object_counts=counts,
            noise_sigma=float(data.get("noise_sigma", 2.0)),
            priorities=priorities,
            name=str(data.get("name", "scenario")),
            agent=dict(data.get("agent") or {}),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc


def dump_scenario(scenario: ScenarioConfig) -> str:
    import yaml

    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)


def load_scenario(source) -> ScenarioConfig:
    """Load a scenario from a YAML path, or a preset name."""
    import yaml

    path = Path(source)
    if not path.exists():
        preset = Path(__file__).with_name("presets") / f"{source}.yaml"
        if not preset.exists():
            raise FileNotFoundError(f"no scenario file or preset named {source!r}")
        path = preset
    return scenario_from_dict(yaml.safe_load(path.read_text()))


def preset_names() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).with_name("presets")).glob("*.yaml"))
