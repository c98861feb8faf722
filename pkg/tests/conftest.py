import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from herwc.calib import CalibrationTask
from herwc.geom import AbsolutePosePair, MotionPair, Pose, axis_angle_to_rotmat, random_pose

settings.register_profile("herwc", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("herwc")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_truth(seed, n_poses=5, x_angle=0.4):
    """Ground-truth X, Z and consistent absolute poses A'_i X = Z B'_i."""
    rng = np.random.default_rng(seed)
    X = Pose(axis_angle_to_rotmat(rng.normal(size=3), x_angle), rng.normal(size=3) * 60)
    Z = random_pose(rng, 800.0)
    A = [random_pose(rng, 300.0) for _ in range(n_poses)]
    pairs = tuple(AbsolutePosePair(a, Z.inverse() @ a @ X) for a in A)
    return X, Z, pairs


@pytest.fixture
def truth():
    return make_truth(7)


@pytest.fixture
def abs_task(truth):
    return CalibrationTask(absolute_poses=truth[2])


@pytest.fixture
def motion_task(truth):
    X, _, pairs = truth
    # A X = X B with B = X^-1 A X
    motions = tuple(MotionPair(p.a, X.inverse() @ p.a @ X) for p in pairs)
    return CalibrationTask(motions=motions)


# acceptance criteria report, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
