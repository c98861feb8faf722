import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herwc import baselines
from herwc.calib import (
    METHODS,
    CalibrationConfig,
    CalibrationTask,
    build_f1,
    build_f2,
    build_f3,
    build_f4,
    build_f5,
    build_f6,
    calibrate,
    direct_objective,
    join_params,
    objective_template,
    objective_at,
    resolve_signs_dq_herwc,
    resolve_signs_dqhec,
    scale_task,
)
from herwc.errors import (
    CombinatorialLimitError,
    DegenerateMotionError,
    IncompatibleMotionError,
    InvalidArgumentError,
)
from herwc.geom import (
    AbsolutePosePair,
    MotionPair,
    Pose,
    axis_angle_to_rotmat,
    pose_to_dq,
    random_pose,
    rotation_error,
)
from herwc.poly import monomial_count

from .conftest import make_truth


def _generic_tasks(seed=3):
    # continuous random data, unit-scaled, so no structural monomial cancels
    rng = np.random.default_rng(seed)
    poses = tuple(AbsolutePosePair(random_pose(rng, 0.5), random_pose(rng, 0.5)) for _ in range(4))
    return scale_task(CalibrationTask(absolute_poses=poses))


@pytest.fixture(scope="module")
def generic():
    return _generic_tasks()


@pytest.fixture
def scaled_abs(abs_task):
    return scale_task(abs_task)


@pytest.fixture
def scaled_motion(motion_task):
    return scale_task(motion_task)


def _x_scaled(truth, task):
    X, Z, _ = truth
    return X.scaled(1 / task.scale), Z.scaled(1 / task.scale)


# ----------------------------------------------------------------- scaling

def test_scale_task_example():
    R = axis_angle_to_rotmat([0, 0, 1], 0.5)
    S = axis_angle_to_rotmat([1, 0, 0], 0.5)
    motions = (MotionPair(Pose(R, [3, 0, 0]), Pose(R, [0, 0, 0])), MotionPair(Pose(S, [0, 4, 0]), Pose(S)))
    t = scale_task(CalibrationTask(motions=motions))
    assert t.scale == 4
    np.testing.assert_allclose(sorted(np.linalg.norm(v) for v in t.translations()), [0, 0, 0.75, 1.0])


def test_scale_task_unit_and_pure_rotation_are_noops(scaled_abs):
    assert scale_task(scaled_abs) is scaled_abs
    R = axis_angle_to_rotmat([0, 0, 1], 0.5)
    S = axis_angle_to_rotmat([1, 0, 0], 0.5)
    t = CalibrationTask(motions=(MotionPair(Pose(R), Pose(R)), MotionPair(Pose(S), Pose(S))))
    assert scale_task(t) is t


def test_scaled_max_translation_is_one(scaled_abs):
    assert max(np.linalg.norm(v) for v in scaled_abs.translations()) == pytest.approx(1.0, abs=1e-15)


def test_task_validation():
    R = axis_angle_to_rotmat([0, 0, 1], 0.5)
    with pytest.raises(InvalidArgumentError):
        CalibrationTask()
    with pytest.raises(DegenerateMotionError):
        CalibrationTask(motions=(MotionPair(Pose(R), Pose(R)),))
    # parallel axes
    R2 = axis_angle_to_rotmat([0, 0, 1], 1.1)
    with pytest.raises(DegenerateMotionError):
        CalibrationTask(motions=(MotionPair(Pose(R), Pose(R)), MotionPair(Pose(R2), Pose(R2))))
    p = AbsolutePosePair(Pose(R), Pose(R))
    with pytest.raises(DegenerateMotionError):
        CalibrationTask(absolute_poses=(p, p))


# ----------------------------------------------------------------- builders

@pytest.mark.parametrize(
    "method,count,nvars,degree",
    [
        ("uvhec", 124, 9, 4),
        ("qhec", 85, 7, 4),
        ("dqhec", 177, 8, 4),
        ("uvherwc", 280, 18, 4),
        ("qherwc", 209, 14, 4),
        ("dqherwc", 112, 16, 2),
    ],
)
def test_monomial_structure(method, count, nvars, degree):
    # generic data entries: rotation identities would cancel some monomials
    tmpl = objective_template(method)
    data = np.random.default_rng(4).normal(size=(4, tmpl.data_width))
    f = tmpl.instantiate(data)
    assert monomial_count(f) == tmpl.structural_monomial_count == count
    assert f.num_vars == nvars
    assert f.degree() == degree


@pytest.mark.parametrize(
    "builder,signed,nvars,degree",
    [(build_f1, False, 9, 4), (build_f2, False, 7, 4), (build_f3, True, 8, 4),
     (build_f4, False, 18, 4), (build_f5, False, 14, 4), (build_f6, True, 16, 2)],
)
def test_builder_shapes(generic, builder, signed, nvars, degree):
    if builder is build_f3:
        task = CalibrationTask(motions=generic.relative_motions(), scale=generic.scale)
        prob = builder(task, [1] * len(task.motions))
    elif signed:
        prob = builder(generic, [1] * len(generic.absolute_poses))
    else:
        prob = builder(generic)
    assert prob.num_vars == nvars
    assert prob.objective.degree() == degree


def test_f1_f2_zero_at_truth(truth, scaled_motion):
    Xs, _ = _x_scaled(truth, scaled_motion)
    for method, build in (("uvhec", build_f1), ("qhec", build_f2)):
        f = build(scaled_motion).objective
        assert abs(f(join_params(method, Xs))) < 1e-12


def test_f1_identity_on_equal_motions():
    R = axis_angle_to_rotmat([0, 0, 1], 0.5)
    S = axis_angle_to_rotmat([1, 0, 0], 0.7)
    t = CalibrationTask(motions=(MotionPair(Pose(R, [1, 0, 0]), Pose(R, [1, 0, 0])), MotionPair(Pose(S), Pose(S))))
    f = build_f1(t).objective
    assert abs(f(join_params("uvhec", Pose.identity()))) < 1e-14


def test_f2_double_cover(generic):
    f = build_f2(CalibrationTask(motions=generic.relative_motions())).objective
    assert f.equals(f.substitute_signs([-1, -1, -1, -1, 1, 1, 1]), tol=1e-12)


def test_f3_zero_at_truth_and_sign_sensitive(truth, scaled_motion, rng):
    Xs, _ = _x_scaled(truth, scaled_motion)
    signs = resolve_signs_dqhec(scaled_motion)
    f = build_f3(scaled_motion, signs).objective
    assert abs(f(pose_to_dq(Xs))) < 1e-12
    flipped = list(signs)
    flipped[0] = -flipped[0]
    g = build_f3(scaled_motion, flipped).objective
    q = rng.normal(size=8)
    assert abs(f(q) - g(q)) > 1e-6


def test_f4_f5_f6_zero_at_truth(truth, scaled_abs):
    Xs, Zs = _x_scaled(truth, scaled_abs)
    for method, build in (("uvherwc", build_f4), ("qherwc", build_f5)):
        assert abs(build(scaled_abs).objective(join_params(method, Xs, Zs))) < 1e-12
    signs = resolve_signs_dq_herwc(scaled_abs)
    f6 = build_f6(scaled_abs, signs).objective
    assert abs(f6(np.concatenate((pose_to_dq(Xs), pose_to_dq(Zs))))) < 1e-12


def test_f4_f5_identity_on_equal_poses(rng):
    poses = tuple(AbsolutePosePair(P, P) for P in (random_pose(rng, 0.3) for _ in range(3)))
    t = CalibrationTask(absolute_poses=poses)
    I = Pose.identity()
    assert abs(build_f4(t).objective(join_params("uvherwc", I, I))) < 1e-14
    assert abs(build_f5(t).objective(join_params("qherwc", I, I))) < 1e-14


@pytest.mark.parametrize("method", METHODS)
def test_template_matches_direct_evaluation(generic, method, rng):
    X, Z = random_pose(rng, 0.3), random_pose(rng, 0.3)
    task = generic
    signs = None
    if method == "dqhec":
        task = CalibrationTask(motions=generic.relative_motions())
        signs = list(rng.choice([-1, 1], size=len(task.motions)))
        prob = build_f3(task, signs)
    elif method == "dqherwc":
        signs = list(rng.choice([-1, 1], size=len(task.absolute_poses)))
        prob = build_f6(task, signs)
    else:
        prob = {"uvhec": build_f1, "qhec": build_f2, "uvherwc": build_f4, "qherwc": build_f5}[method](task)
    Zarg = None if method in ("uvhec", "qhec", "dqhec") else Z
    direct = direct_objective(method, task, X, Zarg, signs)
    assert prob.objective(join_params(method, X, Zarg)) == pytest.approx(direct, rel=1e-10)


def test_robotworld_builder_rejects_motions(motion_task):
    with pytest.raises(InvalidArgumentError):
        build_f5(motion_task)


def test_signed_builders_need_one_sign_per_pair(scaled_abs):
    with pytest.raises(InvalidArgumentError):
        build_f6(scaled_abs, [1])


# ----------------------------------------------------------------- signs

def test_dqhec_signs_noiseless_are_congruent(scaled_motion):
    signs = resolve_signs_dqhec(scaled_motion)
    for mp, s in zip(scaled_motion.motions, signs):
        a, b = pose_to_dq(mp.a), pose_to_dq(mp.b)
        assert abs(a[0] - s * b[0]) < 1e-9 and abs(a[4] - s * b[4]) < 1e-9


def test_dqhec_incompatible_motion(scaled_motion):
    bad = list(scaled_motion.motions)
    # a different rotation angle breaks screw congruence
    bad[0] = MotionPair(bad[0].a, Pose(axis_angle_to_rotmat([0, 1, 0], 2.0), bad[0].b.t))
    with pytest.raises(IncompatibleMotionError):
        resolve_signs_dqhec(CalibrationTask(motions=tuple(bad)))


def test_dqherwc_signs_noiseless(scaled_abs, truth):
    signs = resolve_signs_dq_herwc(scaled_abs)
    Xs, Zs = _x_scaled(truth, scaled_abs)
    # signs are those that make the ground truth residual vanish
    qx, qz = pose_to_dq(Xs), pose_to_dq(Zs)
    from herwc.geom import dq_mul

    for p, s in zip(scaled_abs.absolute_poses, signs):
        r = dq_mul(pose_to_dq(p.a), qx) - s * dq_mul(qz, pose_to_dq(p.b))
        assert np.linalg.norm(r) < 1e-9


def test_dqherwc_sign_equivariance(scaled_abs):
    a = [pose_to_dq(p.a) for p in scaled_abs.absolute_poses]
    b = [pose_to_dq(p.b) for p in scaled_abs.absolute_poses]
    base = baselines.resolve_signs(a, b)
    b2 = list(b)
    b2[2] = -b2[2]
    flipped = baselines.resolve_signs(a, b2)
    expect = list(base)
    expect[2] = -expect[2]
    assert flipped == expect


def test_dqherwc_single_pose_is_exhaustive(rng):
    a = [pose_to_dq(random_pose(rng))]
    b = [pose_to_dq(random_pose(rng))]
    s = baselines.resolve_signs(a, b)
    res = baselines.li10_residuals(a, b, np.array([[1.0], [-1.0]]))
    assert res[0 if s == [1] else 1] <= min(res) + 1e-15


def test_sign_cap(rng):
    poses = tuple(AbsolutePosePair(random_pose(rng), random_pose(rng)) for _ in range(5))
    with pytest.raises(CombinatorialLimitError):
        resolve_signs_dq_herwc(CalibrationTask(absolute_poses=poses), cap=4)


# ----------------------------------------------------------------- pipeline

def test_calibrate_qhec_two_motions():
    X, _, pairs = make_truth(11, n_poses=2)
    R1 = axis_angle_to_rotmat([0.3, 1, 0], 0.8)
    R2 = axis_angle_to_rotmat([1, 0, 0.2], 0.6)
    A = [Pose(R1, [120.0, -40, 30]), Pose(R2, [-20.0, 80, 10])]
    task = CalibrationTask(motions=tuple(MotionPair(a, X.inverse() @ a @ X) for a in A))
    res = calibrate(task, "qhec")
    assert res.certified
    assert rotation_error(res.X.R, X.R) < 1e-5
    assert np.linalg.norm(res.X.t - X.t) / res.scale < 1e-5


def test_calibrate_qherwc_three_poses():
    X, Z, pairs = make_truth(5, n_poses=3)
    res = calibrate(CalibrationTask(absolute_poses=pairs), "qherwc")
    assert res.certified
    assert rotation_error(res.X.R, X.R) < 1e-4 and rotation_error(res.Z.R, Z.R) < 1e-4
    assert np.linalg.norm(res.X.t - X.t) / res.scale < 1e-4
    assert np.linalg.norm(res.Z.t - Z.t) / res.scale < 1e-4


def test_calibrate_uvhec_equal_motions_gives_identity():
    R = axis_angle_to_rotmat([0, 0, 1], 0.5)
    S = axis_angle_to_rotmat([1, 0, 0], 0.7)
    t = CalibrationTask(motions=(MotionPair(Pose(R, [1, 2, 0]), Pose(R, [1, 2, 0])), MotionPair(Pose(S, [0, 0, 3]), Pose(S, [0, 0, 3]))))
    res = calibrate(t, "uvhec")
    assert res.certified
    assert rotation_error(res.X.R, np.eye(3)) < 1e-6
    assert np.linalg.norm(res.X.t) < 1e-5
    assert abs(res.objective) < 1e-8


@pytest.mark.parametrize("method", ["uvhec", "qhec", "dqhec"])
def test_handeye_methods_noiseless(truth, abs_task, method):
    X = truth[0]
    res = calibrate(abs_task, method)
    assert res.certified and res.Z is None
    assert rotation_error(res.X.R, X.R) < 1e-4
    assert np.linalg.norm(res.X.t - X.t) / res.scale < 1e-4
    assert res.objective == pytest.approx(objective_at(method, abs_task, res.X), rel=1e-8, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("method", ["qherwc", "dqherwc", "uvherwc"])
def test_robotworld_methods_noiseless(method):
    X, Z, pairs = make_truth(7, n_poses=4)
    task = CalibrationTask(absolute_poses=pairs)
    res = calibrate(task, method)
    assert res.certified
    assert rotation_error(res.X.R, X.R) < 1e-4 and rotation_error(res.Z.R, Z.R) < 1e-4
    assert np.linalg.norm(res.X.t - X.t) / res.scale < 1e-4
    assert np.linalg.norm(res.Z.t - Z.t) / res.scale < 1e-4
    assert res.objective == pytest.approx(objective_at(method, task, res.X, res.Z), rel=1e-8, abs=1e-12)


def _noisy_motion_task(seed, sigma=0.01):
    X, _, pairs = make_truth(seed, n_poses=4)
    rng = np.random.default_rng(seed + 100)
    motions = []
    for p in pairs:
        B = X.inverse() @ p.a @ X
        n = Pose(axis_angle_to_rotmat(rng.normal(size=3), sigma), rng.normal(size=3) * sigma * 10)
        motions.append(MotionPair(p.a, B @ n))
    return X, CalibrationTask(motions=tuple(motions))


def test_unit_invariance():
    _, task_mm = _noisy_motion_task(21)
    task_m = CalibrationTask(motions=tuple(MotionPair(m.a.scaled(1e-3), m.b.scaled(1e-3)) for m in task_mm.motions))
    r_mm, r_m = calibrate(task_mm, "qhec"), calibrate(task_m, "qhec")
    assert rotation_error(r_mm.X.R, r_m.X.R) < 1e-6
    assert np.linalg.norm(r_mm.X.t * 1e-3 - r_m.X.t) < 1e-6


def test_qhec_canonical_branch_and_global_minimum(rng):
    _, task = _noisy_motion_task(22)
    res = calibrate(task, "qhec")
    assert res.certified
    from herwc.geom import rotmat_to_quat

    assert rotmat_to_quat(res.X.R)[0] >= 0
    prob = build_f2(scale_task(task))
    assert prob.objective(join_params("qhec", res.X.scaled(1 / res.scale))) == pytest.approx(res.objective, rel=1e-8)
    for _ in range(100):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        q[0] = abs(q[0])
        t = rng.normal(size=3)
        t *= rng.uniform(0, np.sqrt(2)) / np.linalg.norm(t)
        assert res.objective <= prob.objective(np.concatenate((q, t))) + 1e-12


@given(st.integers(0, 10_000))
def test_objective_at_truth_vanishes(seed):
    X, Z, pairs = make_truth(seed, n_poses=3)
    task = CalibrationTask(absolute_poses=pairs)
    for method in ("uvhec", "qhec", "uvherwc", "qherwc", "dqherwc"):
        assert objective_at(method, task, X, Z) < 1e-12


def test_calibrate_rejects_bad_inputs(motion_task, abs_task):
    with pytest.raises(InvalidArgumentError):
        calibrate(motion_task, "qherwc")
    with pytest.raises(InvalidArgumentError):
        calibrate(abs_task, "nope")
    with pytest.raises(InvalidArgumentError):
        objective_at("nope", abs_task, Pose.identity())


def test_result_carries_signs(abs_task):
    res = calibrate(abs_task, "dqhec")
    assert len(res.sign_assignment) == len(abs_task.relative_motions())
    assert set(res.sign_assignment) <= {-1, 1}
    assert res.diagnostics["status"] == "optimal"


def test_config_bounds_are_used(scaled_abs):
    prob = build_f5(scaled_abs, CalibrationConfig(tx_bound=3.0, tz_bound=7.0))
    x = np.zeros(14)
    vals = sorted(g(x) for g in prob.inequalities)
    assert vals == [0.0, 0.0, 3.0, 7.0]
