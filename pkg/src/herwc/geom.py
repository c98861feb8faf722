"""Rigid-body geometry: poses, unit quaternions and unit dual quaternions.

Quaternions are stored scalar-first, ``(q1, q2, q3, q4) = (w, x, y, z)``.
Dual quaternions are 8-vectors ``(q, q')`` with real part ``q`` and dual
part ``q'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

INPUT_TOL = 1e-6
OUTPUT_TOL = 1e-9


def _as_rotation(R, tol: float) -> np.ndarray:
    R = np.array(R, dtype=float)
    if R.shape != (3, 3):
        raise InvalidArgumentError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise InvalidArgumentError("rotation has non-finite entries")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidArgumentError("matrix is not a proper rotation")
    return R


def nearest_rotation(M) -> np.ndarray:
    """Closest rotation to M in Frobenius norm (polar factor with det +1)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform x -> R x + t."""

    R: np.ndarray
    t: np.ndarray

    def __init__(self, R, t=None, tol: float = INPUT_TOL):
        R = _as_rotation(R, tol)
        t = np.zeros(3) if t is None else np.array(t, dtype=float).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidArgumentError("translation must be a finite 3-vector")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T, tol: float = INPUT_TOL) -> "Pose":
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4):
            raise InvalidArgumentError(f"homogeneous matrix must be 4x4, got {T.shape}")
        if np.abs(T[3] - [0, 0, 0, 1]).max() > tol:
            raise InvalidArgumentError("last row of a homogeneous matrix must be (0,0,0,1)")
        return cls(T[:3, :3], T[:3, 3], tol=tol)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t, tol=np.inf)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.R @ other.t + self.t, tol=np.inf)

    def apply(self, points) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector) of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def scaled(self, s: float) -> "Pose":
        return Pose(self.R, self.t * s, tol=np.inf)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, atol=atol) and np.allclose(self.t, other.t, atol=atol))

    def __repr__(self) -> str:
        return f"Pose(R={self.R.tolist()}, t={self.t.tolist()})"


@dataclass(frozen=True)
class MotionPair:
    """Relative camera motion ``a`` and matching end-effector motion ``b`` (A X = X B)."""

    a: Pose
    b: Pose


@dataclass(frozen=True)
class AbsolutePosePair:
    """Camera-to-world pose ``a`` and end-effector-to-base pose ``b`` (A' X = Z B')."""

    a: Pose
    b: Pose


# -- quaternions ------------------------------------------------------------

def quat_mul(p, q) -> np.ndarray:
    """Hamilton product p * q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pv, qv = p[1:], q[1:]
    return np.concatenate(([p[0] * q[0] - pv @ qv], p[0] * qv + q[0] * pv + np.cross(pv, qv)))


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate(([q[0]], -q[1:]))


def canonical_quat(q) -> np.ndarray:
    """Pick the representative of {q, -q} with q1 >= 0 (lexicographic tie-break)."""
    q = np.array(q, dtype=float)
    for c in q:
        if c > 0:
            return q
        if c < 0:
            return -q
    return q


def quat_to_rotmat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,) or abs(q @ q - 1.0) > OUTPUT_TOL:
        raise InvalidArgumentError("quat_to_rotmat needs a unit quaternion")
    q1, q2, q3, q4 = q
    return np.array([
        [q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4, 2 * (q2 * q3 - q4 * q1), 2 * (q2 * q4 + q3 * q1)],
        [2 * (q2 * q3 + q4 * q1), q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4, 2 * (q3 * q4 - q2 * q1)],
        [2 * (q2 * q4 - q3 * q1), 2 * (q3 * q4 + q2 * q1), q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4],
    ])


def rotmat_to_quat(R) -> np.ndarray:
    """Unit quaternion of a rotation matrix, canonical sign."""
    R = _as_rotation(R, INPUT_TOL)
    # Shepperd's method: branch on the largest of the four squared components
    tr = np.trace(R)
    cand = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    i = int(np.argmax(cand))
    if i == 0:
        s = 2.0 * np.sqrt(max(1.0 + tr, 0.0))
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif i == 1:
        s = 2.0 * np.sqrt(max(1.0 + 2 * R[0, 0] - tr, 0.0))
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif i == 2:
        s = 2.0 * np.sqrt(max(1.0 + 2 * R[1, 1] - tr, 0.0))
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(max(1.0 + 2 * R[2, 2] - tr, 0.0))
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    return canonical_quat(q / np.linalg.norm(q))


def axis_angle_to_rotmat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return quat_to_rotmat(np.concatenate(([np.cos(h)], np.sin(h) * axis)))


def rotation_log(R) -> np.ndarray:
    """Axis-angle vector (axis * angle) of a rotation, angle in [0, pi]."""
    q = rotmat_to_quat(R)
    s = np.linalg.norm(q[1:])
    if s < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, q[0])
    return q[1:] / s * angle


def rotation_angle(R) -> float:
    """Rotation angle in [0, pi] of a rotation matrix."""
    c = np.clip((np.trace(np.asarray(R)) - 1.0) / 2.0, -1.0, 1.0)
    # arccos is ill-conditioned near 0; use the skew part there
    R = np.asarray(R)
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(s, c))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_to_rotmat(q / np.linalg.norm(q))


def random_pose(rng: np.random.Generator, trans_scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), rng.normal(size=3) * trans_scale)


# -- dual quaternions -------------------------------------------------------

def dq_mul(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.concatenate((quat_mul(p[:4], q[:4]), quat_mul(p[:4], q[4:]) + quat_mul(p[4:], q[:4])))


def dq_conj(q) -> np.ndarray:
    """Quaternion conjugate applied to both parts, (q*, q'*)."""
    q = np.asarray(q, dtype=float)
    return np.concatenate((quat_conj(q[:4]), quat_conj(q[4:])))


def check_unit_dq(q, tol: float = OUTPUT_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (8,):
        raise InvalidArgumentError(f"dual quaternion must have 8 components, got {q.shape}")
    if abs(q[:4] @ q[:4] - 1.0) > tol or abs(q[:4] @ q[4:]) > tol:
        raise InvalidArgumentError("not a unit dual quaternion")
    return q


def pose_to_dq(p: Pose, sign: float | None = None) -> np.ndarray:
    """Unit dual quaternion (r, 1/2 (0, t) * r) of a pose.

    The real part has canonical sign unless ``sign`` is given, in which case
    the canonical representative is multiplied by it.
    """
    r = rotmat_to_quat(p.R)
    if sign is not None:
        r = r * (1.0 if sign >= 0 else -1.0)
    d = 0.5 * quat_mul(np.concatenate(([0.0], p.t)), r)
    return np.concatenate((r, d))


def dq_to_pose(q) -> Pose:
    q = check_unit_dq(q, INPUT_TOL)
    r = q[:4] / np.linalg.norm(q[:4])
    t = 2.0 * quat_mul(q[4:], quat_conj(r))[1:]
    return Pose(quat_to_rotmat(r), t, tol=np.inf)


def relative_motion(p1: Pose, p2: Pose) -> Pose:
    """Motion p2^-1 * p1 between two absolute poses."""
    return p2.inverse() @ p1


def screw_congruent(a, b, tol: float) -> bool:
    """Necessary condition (a1, a1') == (b1, b1') for a * x = x * b to be solvable."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(abs(a[0] - b[0]) <= tol and abs(a[4] - b[4]) <= tol)


def quat_left_matrix(p) -> np.ndarray:
    """4x4 matrix L(p) with L(p) q = p * q."""
    w, x, y, z = np.asarray(p, dtype=float)
    return np.array([[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]])


def quat_right_matrix(q) -> np.ndarray:
    """4x4 matrix Rm(q) with Rm(q) p = p * q."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array([[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]])


def dq_left_matrix(p) -> np.ndarray:
    """8x8 matrix with dq_left_matrix(p) q = p (x) q."""
    p = np.asarray(p, dtype=float)
    L, Ld = quat_left_matrix(p[:4]), quat_left_matrix(p[4:])
    return np.block([[L, np.zeros((4, 4))], [Ld, L]])


def dq_right_matrix(q) -> np.ndarray:
    """8x8 matrix with dq_right_matrix(q) p = p (x) q."""
    q = np.asarray(q, dtype=float)
    R, Rd = quat_right_matrix(q[:4]), quat_right_matrix(q[4:])
    return np.block([[R, np.zeros((4, 4))], [Rd, R]])


def rotation_error(R1, R2) -> float:
    """Angle (rad) of R1^T R2."""
    return rotation_angle(np.asarray(R1).T @ np.asarray(R2))
