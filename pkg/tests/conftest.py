import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from samtrack.sim.scene import MotionSpec, SceneSpec, TargetSpec, generate
from samtrack.tensor import SplitMix64

settings.register_profile("samtrack", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("samtrack")


@pytest.fixture
def rng():
    return SplitMix64(12345)


def standard_spec(frames: int = 12, **motion) -> SceneSpec:
    """The small standard scene used by pipeline-level tests: one red ellipse on the default background."""
    return SceneSpec(height=64, width=64, frames=frames, seed=3,
                     target=TargetSpec(radii=(11.0, 14.0), color=(0.85, 0.25, 0.2)),
                     motion=MotionSpec(start=(32.0, 32.0), **motion))


@pytest.fixture(scope="session")
def static_sample():
    return generate(standard_spec())


@pytest.fixture(scope="session")
def moving_sample():
    return generate(standard_spec(frames=12, velocity=(0.6, 0.4)))


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
