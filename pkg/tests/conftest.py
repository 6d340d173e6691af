import os

import pytest
from hypothesis import HealthCheck, settings

from morlcam.camsim import PhaseSpec, ScenarioConfig
from morlcam.core import CameraSettings
from morlcam.estimators import AuProfile

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def make_scenario(optima=None, phases=(("LAB", 1.0),), steps_per_phase=50, seed=1, size=16,
                  counts=None, noise=0.0, **kw):
    optima = optima or {"A": ["[60,30,40,80]"], "B": ["[80,60,50,40]"]}
    phase_specs = tuple(PhaseSpec(n, a) for n, a in phases)
    profiles = tuple(
        AuProfile(name, {p.name: CameraSettings.parse(o) for p, o in zip(phase_specs, opts)})
        for name, opts in optima.items())
    counts = counts or {name: (4,) * len(phase_specs) for name in optima}
    return ScenarioConfig(phase_specs, steps_per_phase, seed, size, profiles, counts, noise, **kw)


@pytest.fixture
def small_scenario():
    return make_scenario()


# -- acceptance report ------------------------------------------------------------------

ACCEPTANCE = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
