"""Synthetic calibration scenarios, noise models and evaluation metrics.

Lengths are in millimetres and angles in degrees unless stated otherwise.
The calibration target is a planar grid lying in the z = 0 plane of the
world frame, centred at the world origin. Cameras look along their +z axis
with x to the right and y down in the image.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from . import baselines
from .calib import (
    HANDEYE_METHODS,
    METHODS,
    CalibrationConfig,
    CalibrationTask,
    calibrate,
    objective_at,
    pairwise_motions,
    scale_task,
)
from .errors import InvalidArgumentError, NumericalFailureError
from .geom import AbsolutePosePair, MotionPair, Pose, nearest_rotation, pose_to_dq, random_rotation
from .sdp import SolverConfig

PAPER_SHELL_RADIUS = 30.0
BASELINES = ("park94", "dan98", "li10_dq")
HANDEYE_BASELINES = ("park94", "dan98")
DESK_NOISE_GRID = (0.0, 1.0, 2.0, 3.0)
FULL_NOISE_GRID = tuple(0.25 * k for k in range(13))
DESK_TASKS = 20
FULL_TASKS = 100
# image noise of a few pixels moves (a1, a1') by up to ~6e-3 in scaled units
BENCH_SIGN_TOL = 2e-2

# representative 6-DOF serial arm (mm, degrees)
DEFAULT_DH = {
    "d": (450.0, 0.0, 0.0, 640.0, 0.0, 100.0),
    "a": (150.0, 614.0, 200.0, 0.0, 0.0, 0.0),
    "alpha": (-90.0, 0.0, -90.0, 90.0, -90.0, 0.0),
    "offset": (0.0, -90.0, 0.0, 0.0, 0.0, 0.0),
}
DEFAULT_HOME_JOINTS = (0.0, 10.0, -10.0, 0.0, -80.0, 0.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Geometry of a synthetic calibration scenario.

    Attributes:
        grid_points: points per side of the square target grid.
        grid_spacing: distance between neighbouring grid points.
        camera_shell_radius: radius of the half-sphere of camera centres.
        view_cone_deg: largest angle between a camera centre and the target normal.
        aim_jitter: spread of the point each camera looks at, around the target centre.
        handeye_rot_max: bound on each Euler angle of the hand-eye rotation.
        handeye_trans_max: bound on the hand-eye translation length.
        robotworld_trans_max: bound on the robot-world translation length.
        num_camera_poses: camera poses per task.
        image_size: (width, height) in pixels.
        focal: focal length in pixels.
        principal_point: (cx, cy) in pixels.
        workspace_points: number of workspace samples for the 3D errors.
        workspace_side: side of the workspace cube.
        joint_jitter_deg: spread of the joint vectors around the home pose.
        dh: Denavit-Hartenberg table with keys d, a, alpha, offset.
        home_joints: home joint vector of the kinematic protocol.
    """

    grid_points: int = 16
    grid_spacing: float = 12.5
    camera_shell_radius: float = 300.0
    view_cone_deg: float = 40.0
    aim_jitter: float = 20.0
    handeye_rot_max: float = 5.0
    handeye_trans_max: float = 200.0
    robotworld_trans_max: float = 2000.0
    num_camera_poses: int = 9
    image_size: Tuple[int, int] = (640, 480)
    focal: float = 525.0
    principal_point: Tuple[float, float] = (319.5, 239.5)
    workspace_points: int = 9240
    workspace_side: float = 700.0
    joint_jitter_deg: float = 8.0
    dh: Dict[str, Tuple[float, ...]] = field(default_factory=lambda: dict(DEFAULT_DH))
    home_joints: Tuple[float, ...] = DEFAULT_HOME_JOINTS

    def __post_init__(self):
        lengths = (
            self.grid_spacing,
            self.camera_shell_radius,
            self.handeye_trans_max,
            self.robotworld_trans_max,
            self.workspace_side,
            self.focal,
        )
        if any(not (v > 0 and np.isfinite(v)) for v in lengths):
            raise InvalidArgumentError("scenario lengths must be positive")
        if self.grid_points < 2:
            raise InvalidArgumentError("grid needs at least 2 points per side")
        if self.num_camera_poses < 3:
            raise InvalidArgumentError("a scenario needs at least three camera poses")
        if self.workspace_points < 1:
            raise InvalidArgumentError("workspace needs at least one point")
        if not 0 < self.view_cone_deg < 90:
            raise InvalidArgumentError("view cone must lie in (0, 90) degrees")
        if self.handeye_rot_max < 0 or self.aim_jitter < 0 or self.joint_jitter_deg < 0:
            raise InvalidArgumentError("angle and jitter bounds must be nonnegative")
        for key in ("d", "a", "alpha", "offset"):
            if len(self.dh.get(key, ())) != 6:
                raise InvalidArgumentError(f"DH table needs six values for {key!r}")
        if len(self.home_joints) != 6:
            raise InvalidArgumentError("home joint vector needs six values")

    @property
    def K(self) -> np.ndarray:
        cx, cy = self.principal_point
        return np.array([[self.focal, 0.0, cx], [0.0, self.focal, cy], [0.0, 0.0, 1.0]])

    def grid(self) -> np.ndarray:
        """Target points in the world frame, shape (grid_points**2, 3)."""
        n = self.grid_points
        c = (np.arange(n) - (n - 1) / 2) * self.grid_spacing
        gx, gy = np.meshgrid(c, c, indexing="xy")
        return np.column_stack((gx.ravel(), gy.ravel(), np.zeros(n * n)))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dh"] = {k: list(v) for k, v in self.dh.items()}
        out["image_size"] = list(self.image_size)
        out["principal_point"] = list(self.principal_point)
        out["home_joints"] = list(self.home_joints)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown scenario fields: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for key in ("image_size", "principal_point", "home_joints"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "dh" in kw:
            kw["dh"] = {k: tuple(float(x) for x in v) for k, v in kw["dh"].items()}
        return cls(**kw)


@dataclass(frozen=True)
class GroundTruth:
    """Exact poses of one synthetic task.

    Attributes:
        X: end-effector to camera transform.
        Z: robot base to world transform.
        camera_poses: camera to world poses A'_i.
        arm_poses: end-effector to base poses B'_i.
        joints: joint vectors in degrees when generated kinematically.
        seed: generator seed.
    """

    X: Pose
    Z: Pose
    camera_poses: Tuple[Pose, ...]
    arm_poses: Tuple[Pose, ...]
    joints: Optional[np.ndarray] = None
    seed: int = 0

    @property
    def absolute_pairs(self) -> Tuple[AbsolutePosePair, ...]:
        return tuple(AbsolutePosePair(a, b) for a, b in zip(self.camera_poses, self.arm_poses))

    @property
    def motions(self) -> Tuple[MotionPair, ...]:
        return pairwise_motions(self.absolute_pairs)

    def consistency_residual(self) -> float:
        return max(
            float(np.abs((a @ self.X).matrix - (self.Z @ b).matrix).max())
            for a, b in zip(self.camera_poses, self.arm_poses)
        )


@dataclass(frozen=True)
class WorkspaceSample:
    """Regular grid of points filling a cube in the robot base frame."""

    points: np.ndarray
    center: np.ndarray
    side: float

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Observations:
    """Image measurements of the target grid.

    Attributes:
        points: target points in the world frame, (N, 3).
        pixels: observed pixels, (m, N, 2).
        camera_poses: camera poses recovered from the pixels.
        arm_poses: end-effector poses reported by the robot.
        K: camera intrinsics.
    """

    points: np.ndarray
    pixels: np.ndarray
    camera_poses: Tuple[Pose, ...]
    arm_poses: Tuple[Pose, ...]
    K: np.ndarray


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def project(points, camera_pose: Pose, K) -> Tuple[np.ndarray, np.ndarray]:
    """Pixels of world points seen by a camera with camera-to-world pose.

    Returns:
        (pixels (N, 2), depths (N,)).
    """
    pc = camera_pose.inverse().apply(np.asarray(points, dtype=float))
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = (pc @ np.asarray(K).T)[:, :2] / z[:, None]
    return uv, z


def _visible(spec: ScenarioSpec, pose: Pose) -> bool:
    uv, z = project(spec.grid(), pose, spec.K)
    w, h = spec.image_size
    return bool(
        np.all(z > 0) and np.all(uv[:, 0] >= 0) and np.all(uv[:, 0] <= w - 1)
        and np.all(uv[:, 1] >= 0) and np.all(uv[:, 1] <= h - 1)
    )


def _look_at(center, target, roll: float) -> np.ndarray:
    """Camera-to-world rotation with the optical axis from center to target."""
    z = np.asarray(target, float) - np.asarray(center, float)
    z /= np.linalg.norm(z)
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R0 = np.column_stack((x, y, z))
    c, s = np.cos(roll), np.sin(roll)
    return R0 @ np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _random_camera_pose(spec: ScenarioSpec, rng: np.random.Generator, max_tries: int = 1000) -> Pose:
    cos_max = np.cos(np.radians(spec.view_cone_deg))
    for _ in range(max_tries):
        cz = rng.uniform(cos_max, 1.0)
        phi = rng.uniform(0.0, 2 * np.pi)
        sz = np.sqrt(1.0 - cz * cz)
        center = spec.camera_shell_radius * np.array([sz * np.cos(phi), sz * np.sin(phi), cz])
        aim = np.append(rng.uniform(-spec.aim_jitter, spec.aim_jitter, 2), 0.0)
        pose = Pose(_look_at(center, aim, rng.uniform(-np.pi, np.pi)), center, tol=1e-9)
        if _visible(spec, pose):
            return pose
    raise InvalidArgumentError("could not place a camera that sees the whole target; enlarge the shell radius")


def _random_handeye(spec: ScenarioSpec, rng: np.random.Generator) -> Pose:
    angles = rng.uniform(-spec.handeye_rot_max, spec.handeye_rot_max, 3)
    R = Rotation.from_euler("xyz", angles, degrees=True).as_matrix()
    d = rng.normal(size=3)
    t = d / np.linalg.norm(d) * rng.uniform(0.0, spec.handeye_trans_max)
    return Pose(R, t, tol=1e-9)


def dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    """Standard DH link transform Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha), radians."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def dh_forward(joints, dh_params: Optional[dict] = None) -> Pose:
    """End-effector to base pose of a 6-joint serial arm.

    Args:
        joints: six joint angles in degrees.
        dh_params: table with keys d, a (mm), alpha and optional offset (degrees).
    """
    q = np.asarray(joints, dtype=float).reshape(-1)
    if q.shape != (6,):
        raise InvalidArgumentError("dh_forward expects six joint angles")
    p = DEFAULT_DH if dh_params is None else dh_params
    offset = p.get("offset", (0.0,) * 6)
    T = np.eye(4)
    for k in range(6):
        T = T @ dh_transform(np.radians(q[k] + offset[k]), p["d"][k], p["a"][k], np.radians(p["alpha"][k]))
    return Pose(nearest_rotation(T[:3, :3]), T[:3, 3], tol=1e-9)


# ---------------------------------------------------------------------------
# task generation
# ---------------------------------------------------------------------------

def generate_task(spec: ScenarioSpec, seed: int, kinematic: bool = False) -> Tuple[GroundTruth, CalibrationTask]:
    """Random ground truth and the matching noiseless calibration task.

    With ``kinematic=False`` camera poses are drawn on the half-sphere above
    the target and the arm poses follow as B'_i = Z^-1 A'_i X. With
    ``kinematic=True`` joint vectors are drawn around the home pose, the arm
    poses come from forward kinematics and the world frame is placed so the
    target sits in front of the mean camera.
    """
    rng = np.random.default_rng(seed)
    X = _random_handeye(spec, rng)
    if kinematic:
        return _generate_kinematic(spec, rng, X, seed)
    cams = tuple(_random_camera_pose(spec, rng) for _ in range(spec.num_camera_poses))
    d = rng.normal(size=3)
    Z = Pose(random_rotation(rng), d / np.linalg.norm(d) * rng.uniform(0.0, spec.robotworld_trans_max), tol=1e-9)
    Zi = Z.inverse()
    arms = tuple(Zi @ a @ X for a in cams)
    gt = GroundTruth(X, Z, cams, arms, None, seed)
    return gt, CalibrationTask(absolute_poses=gt.absolute_pairs)


def _generate_kinematic(spec: ScenarioSpec, rng, X: Pose, seed: int, max_tries: int = 1000):
    home = np.asarray(spec.home_joints, dtype=float)
    Xi = X.inverse()
    # camera-to-base pose at home fixes where the target goes
    cam_home = dh_forward(home, spec.dh) @ Xi
    axis = cam_home.R[:, 2]
    center = cam_home.t + spec.camera_shell_radius * axis
    # target frame: +z points back toward the camera
    target_to_base = Pose(_look_at(np.zeros(3), -axis, rng.uniform(-np.pi, np.pi)), center, tol=1e-9)
    Z = target_to_base.inverse()
    joints, cams, arms = [], [], []
    tries = 0
    while len(joints) < spec.num_camera_poses:
        tries += 1
        if tries > max_tries:
            raise InvalidArgumentError("could not sample joint vectors that keep the target in view")
        q = home + rng.uniform(-spec.joint_jitter_deg, spec.joint_jitter_deg, 6)
        B = dh_forward(q, spec.dh)
        A = Z @ B @ Xi
        if _visible(spec, A):
            joints.append(q)
            cams.append(A)
            arms.append(B)
    gt = GroundTruth(X, Z, tuple(cams), tuple(arms), np.array(joints), seed)
    return gt, CalibrationTask(absolute_poses=gt.absolute_pairs)


def workspace_sample(spec: ScenarioSpec, gt: GroundTruth, count: Optional[int] = None) -> WorkspaceSample:
    """Regular grid of ``count`` points inside a cube centred at the target.

    The grid has a x b x c cells with a*b*c = count and a <= b <= c as close
    to each other as possible; points sit at cell centres.
    """
    count = spec.workspace_points if count is None else int(count)
    if count < 1:
        raise InvalidArgumentError("workspace needs at least one point")
    dims = _near_cubic_factors(count)
    side = spec.workspace_side
    axes = [(np.arange(k) + 0.5) / k * side - side / 2 for k in dims]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    center = gt.Z.inverse().t  # target centre expressed in the robot base frame
    return WorkspaceSample(g + center, center, side)


def _near_cubic_factors(n: int) -> Tuple[int, int, int]:
    best = (1, 1, n)
    for a in range(1, int(round(n ** (1 / 3))) + 2):
        if n % a:
            continue
        m = n // a
        for b in range(a, int(np.sqrt(m)) + 1):
            if m % b == 0:
                cand = (a, b, m // b)
                if max(cand) - min(cand) < max(best) - min(best):
                    best = cand
    return best


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

def homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT homography mapping 2D points src to dst."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    if len(src) < 4 or src.shape != dst.shape:
        raise InvalidArgumentError("homography needs at least four point correspondences")

    def normalizer(p):
        c = p.mean(axis=0)
        s = np.sqrt(2) / max(np.mean(np.linalg.norm(p - c, axis=1)), 1e-300)
        return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])

    Ts, Td = normalizer(src), normalizer(dst)
    ps = np.column_stack((src, np.ones(len(src)))) @ Ts.T
    pd = np.column_stack((dst, np.ones(len(dst)))) @ Td.T
    n = len(src)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = ps
    A[0::2, 6:9] = -pd[:, [0]] * ps
    A[1::2, 3:6] = ps
    A[1::2, 6:9] = -pd[:, [1]] * ps
    _, s, Vt = np.linalg.svd(A)
    if s[-2] <= 1e-12 * s[0]:
        raise NumericalFailureError("degenerate homography")
    H = Vt[-1].reshape(3, 3)
    return np.linalg.solve(Td, H @ Ts)


def pose_from_homography(points: np.ndarray, pixels: np.ndarray, K) -> Pose:
    """Camera-to-world pose from pixels of planar points lying in z = 0."""
    x = np.column_stack((pixels, np.ones(len(pixels)))) @ np.linalg.inv(K).T
    H = homography_dlt(points[:, :2], x[:, :2] / x[:, [2]])
    lam = 2.0 / (np.linalg.norm(H[:, 0]) + np.linalg.norm(H[:, 1]))
    H = lam * H
    if H[2, 2] < 0:  # the target centre must lie in front of the camera
        H = -H
    r1, r2, t = H[:, 0], H[:, 1], H[:, 2]
    R = nearest_rotation(np.column_stack((r1, r2, np.cross(r1, r2))))
    # H maps world to camera; invert to get camera to world
    return Pose(R, t, tol=np.inf).inverse()


def observe(gt: GroundTruth, spec: ScenarioSpec, sigma_px: float, rng: np.random.Generator,
            arm_poses: Optional[Sequence[Pose]] = None) -> Observations:
    """Noisy pixels of the grid and camera poses recovered from them."""
    if sigma_px < 0:
        raise InvalidArgumentError("noise level must be nonnegative")
    pts = spec.grid()
    pix, cams = [], []
    for A in gt.camera_poses:
        uv, _ = project(pts, A, spec.K)
        uv = uv + sigma_px * rng.normal(size=uv.shape)
        pix.append(uv)
        cams.append(pose_from_homography(pts, uv, spec.K))
    arms = tuple(gt.arm_poses if arm_poses is None else arm_poses)
    return Observations(pts, np.array(pix), tuple(cams), arms, spec.K)


def project_and_noise(gt: GroundTruth, sigma_px: float, seed: int, spec: Optional[ScenarioSpec] = None) -> List[Pose]:
    """Camera poses recovered from grid projections corrupted by pixel noise."""
    spec = spec or ScenarioSpec()
    return list(observe(gt, spec, sigma_px, np.random.default_rng(seed)).camera_poses)


def noisy_task(gt: GroundTruth, sigma_px: float, seed: int, spec: Optional[ScenarioSpec] = None) -> CalibrationTask:
    cams = project_and_noise(gt, sigma_px, seed, spec)
    return CalibrationTask(absolute_poses=tuple(AbsolutePosePair(a, b) for a, b in zip(cams, gt.arm_poses)))


def joint_noise_task(gt: GroundTruth, sigma_deg: float, sigma_px: float, seed: int,
                     spec: Optional[ScenarioSpec] = None, return_offsets: bool = False):
    """Task with one joint offset vector shared by all poses plus pixel noise.

    Raises:
        InvalidArgumentError: if ``gt`` carries no joint vectors.
    """
    if gt.joints is None:
        raise InvalidArgumentError("joint noise needs a kinematically generated ground truth")
    if sigma_deg < 0:
        raise InvalidArgumentError("noise level must be nonnegative")
    spec = spec or ScenarioSpec()
    rng = np.random.default_rng(seed)
    offsets = sigma_deg * rng.normal(size=6)
    arms = tuple(dh_forward(q + offsets, spec.dh) for q in gt.joints)
    obs = observe(gt, spec, sigma_px, rng, arms)
    task = CalibrationTask(absolute_poses=tuple(AbsolutePosePair(a, b) for a, b in zip(obs.camera_poses, arms)))
    return (task, offsets) if return_offsets else task


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def error_EXZ(X: Pose, Z: Pose, gt: GroundTruth, workspace: WorkspaceSample) -> float:
    """Mean distance between workspace points brought to the camera with (X, Z) and with the truth."""
    Y = workspace.points
    Yw = (Z.inverse() @ gt.Z).apply(Y)
    total = 0.0
    for B in gt.arm_poses:
        Bi = B.inverse()
        d = (X @ Bi).apply(Yw) - (gt.X @ Bi).apply(Y)
        total += float(np.sum(np.linalg.norm(d, axis=1)))
    return total / (len(gt.arm_poses) * len(Y))


def error_EX(X: Pose, gt: GroundTruth, workspace: WorkspaceSample) -> float:
    """Mean distance between workspace points moved by X B_i^-1 and X_gt B_i^-1 over all motions."""
    Y = workspace.points
    motions = gt.motions
    total = 0.0
    for mp in motions:
        Bi = mp.b.inverse()
        # X B^-1 Y - X_gt B^-1 Y = (R - R_gt)(B^-1 Y) + (t - t_gt)
        P = Bi.apply(Y)
        d = P @ (X.R - gt.X.R).T + (X.t - gt.X.t)
        total += float(np.sum(np.linalg.norm(d, axis=1)))
    return total / (len(motions) * len(Y))


@dataclass
class ReprojectionReport:
    """Per-point reprojection errors and their summary."""

    errors: np.ndarray
    excluded: int
    median: float
    q25: float
    q75: float


def _report(errs: List[float], excluded: int) -> ReprojectionReport:
    e = np.asarray(errs, dtype=float)
    if len(e) == 0:
        return ReprojectionReport(e, excluded, float("nan"), float("nan"), float("nan"))
    q25, med, q75 = np.percentile(e, [25, 50, 75])
    return ReprojectionReport(e, excluded, float(med), float(q25), float(q75))


def _pixel_errors(obs_uv, points, pose, K, errs, excluded):
    uv, z = project(points, pose, K)
    front = z > 0
    errs.extend(np.linalg.norm(obs_uv[front] - uv[front], axis=1).tolist())
    return excluded + int(np.sum(~front))


def reprojection_errors(X: Pose, obs: Observations, Z: Optional[Pose] = None) -> ReprojectionReport:
    """Pixel errors of the grid reprojected through a calibration.

    With ``Z`` the camera pose of view i is Z B'_i X^-1. Without it, each
    view is predicted from every other view k as A'_k X B'_k^-1 B'_i X^-1
    and the errors are averaged over k. Points behind a camera are excluded.
    """
    m = len(obs.arm_poses)
    Xi = X.inverse()
    errs: List[float] = []
    excluded = 0
    if Z is not None:
        for i in range(m):
            excluded = _pixel_errors(obs.pixels[i], obs.points, Z @ obs.arm_poses[i] @ Xi, obs.K, errs, excluded)
        return _report(errs, excluded)
    if m < 2:
        raise InvalidArgumentError("the cross-view error needs at least two views")
    for i in range(m):
        acc = np.zeros(len(obs.points))
        valid = np.ones(len(obs.points), dtype=bool)
        for k in range(m):
            if k == i:
                continue
            pose = obs.camera_poses[k] @ X @ obs.arm_poses[k].inverse() @ obs.arm_poses[i] @ Xi
            uv, z = project(obs.points, pose, obs.K)
            valid &= z > 0
            with np.errstate(invalid="ignore"):
                acc += np.where(z > 0, np.linalg.norm(obs.pixels[i] - uv, axis=1), 0.0)
        excluded += int(np.sum(~valid))
        errs.extend((acc[valid] / (m - 1)).tolist())
    return _report(errs, excluded)


# ---------------------------------------------------------------------------
# benchmark driver
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("seed", "method", "sigma", "metric", "error", "objective", "certified", "wall_time")


def _signs_li10(task: CalibrationTask) -> List[int]:
    a = [pose_to_dq(p.a) for p in task.absolute_poses]
    b = [pose_to_dq(p.b) for p in task.absolute_poses]
    return baselines.resolve_signs(a, b)


def run_method(method: str, task: CalibrationTask, cfg: Optional[CalibrationConfig] = None):
    """Run an LMI method or a baseline.

    Returns:
        (X, Z or None, objective, certified).
    """
    if method in METHODS:
        r = calibrate(task, method, cfg)
        return r.X, r.Z, r.objective, r.certified
    # baselines run on unit-scaled data; in millimetres the dual-part rows
    # swamp the rotation rows and the null vectors degenerate
    scaled = scale_task(task)
    alpha = scaled.scale / task.scale
    if method in ("park94", "dan98"):
        solve = baselines.park94 if method == "park94" else baselines.dan98
        X = solve(scaled.relative_motions()).scaled(alpha)
        return X, None, objective_at("qhec", task, X), False
    if method == "li10_dq":
        X, Z, _ = baselines.li10_dq(scaled.absolute_poses, _signs_li10(scaled))
        X, Z = X.scaled(alpha), Z.scaled(alpha)
        return X, Z, objective_at("qherwc", task, X, Z), False
    raise InvalidArgumentError(f"unknown method {method!r}")


def is_handeye(method: str) -> bool:
    return method in HANDEYE_METHODS or method in HANDEYE_BASELINES


def _cell(args):
    spec, seed, methods, sigmas, record_timing, cfg = args
    gt, _ = generate_task(spec, seed)
    ws = workspace_sample(spec, gt)
    rows = []
    for li, sigma in enumerate(sigmas):
        task = noisy_task(gt, sigma, seed * 1000 + li + 1, spec)
        for method in methods:
            t0 = time.perf_counter()
            X, Z, obj, cert = run_method(method, task, cfg)
            wall = time.perf_counter() - t0 if record_timing else 0.0
            if is_handeye(method):
                metric, err = "E_X", error_EX(X, gt, ws)
            else:
                metric, err = "E_XZ", error_EXZ(X, Z, gt, ws)
            rows.append((seed, method, float(sigma), metric, err, obj, bool(cert), wall))
    return rows


def task_seeds(master_seed: int, num_tasks: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(num_tasks)]


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("HERWC_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise InvalidArgumentError(f"HERWC_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def bench_config(**solver_kw) -> CalibrationConfig:
    """Calibration settings for noisy synthetic sweeps."""
    return CalibrationConfig(solver=SolverConfig(**solver_kw), sign_tol=BENCH_SIGN_TOL)


def run_benchmark(spec: ScenarioSpec, methods: Sequence[str], sigmas: Sequence[float], seeds: Sequence[int],
                  cfg: Optional[CalibrationConfig] = None, workers: Optional[int] = None,
                  record_timing: bool = True) -> List[tuple]:
    """Evaluate every (task, method, noise level) cell; rows are sorted."""
    methods = list(methods)
    if not methods:
        raise InvalidArgumentError("benchmark needs at least one method")
    for m in methods:
        if m not in METHODS and m not in BASELINES:
            raise InvalidArgumentError(f"unknown method {m!r}")
    if not len(sigmas):
        raise InvalidArgumentError("benchmark needs at least one noise level")
    cfg = cfg or bench_config()
    jobs = [(spec, int(s), methods, list(sigmas), record_timing, cfg) for s in seeds]
    n = min(worker_count(workers), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            parts = list(ex.map(_cell, jobs))
    else:
        parts = [_cell(j) for j in jobs]
    rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    return rows


def rows_to_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for seed, method, sigma, metric, err, obj, cert, wall in rows:
        w.writerow((seed, method, repr(sigma), metric, repr(float(err)), repr(float(obj)), int(cert), f"{wall:.6f}"))
    return buf.getvalue()


def summarize(rows: Sequence[tuple]) -> Dict[Tuple[str, float], float]:
    """Mean error per (method, noise level)."""
    acc: Dict[Tuple[str, float], List[float]] = {}
    for r in rows:
        acc.setdefault((r[1], r[2]), []).append(r[4])
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}
