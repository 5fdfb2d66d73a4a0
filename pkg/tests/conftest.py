import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quadmanip.dynamics import SystemParams  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, tilt=0.6, rate=1.5):
    q = np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(-tilt, tilt, 2), rng.uniform(-3, 3, 1), rng.uniform(-3, 3, 2)])
    qd = rng.uniform(-rate, rate, 8)
    return q, qd


HANGING = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, np.pi / 2, 0.0])


def hover_scenario(duration=5.0, offset=None, **kw):
    """Hover with the arm hanging at (0, 0, 1); ``offset`` perturbs the initial q."""
    from quadmanip.dynamics import SystemState
    from quadmanip.kinematics import JointAngles, VehicleConfig, forward_kinematics
    from quadmanip.simengine import Scenario, Waypoint
    from quadmanip.spatial import EulerAngles

    pose = forward_kinematics(VehicleConfig(0, 0, 1, 0), EulerAngles(0, 0, 0), JointAngles(np.pi / 2, 0), kw.get("params", SystemParams()).lengths)
    q0 = HANGING + (np.zeros(8) if offset is None else np.asarray(offset, float))
    kw.setdefault("name", "hover")
    return Scenario((Waypoint(pose, 0.0, 0.0),), duration, initial=SystemState(q0), **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
