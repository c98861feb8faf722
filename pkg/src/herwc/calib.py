"""The six polynomial calibration formulations and the end-to-end pipeline.

Each objective is built once as a symbolic template whose coefficients are
polynomials in per-pose data symbols (rotation/translation entries or dual
quaternion components). A task instantiates the template by summing those
data polynomials over its poses. Cancellations that hold for any data are
therefore exact, and the template's monomial support is the structural
monomial count of the formulation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines
from .errors import (
    DegenerateMotionError,
    IncompatibleMotionError,
    InvalidArgumentError,
)
from .extract import certify_and_extract, polish_point
from .geom import (
    AbsolutePosePair,
    MotionPair,
    Pose,
    dq_conj,
    dq_mul,
    dq_to_pose,
    nearest_rotation,
    pose_to_dq,
    quat_mul,
    quat_to_rotmat,
    random_rotation,
    relative_motion,
    rotation_log,
    rotmat_to_quat,
)
from .poly import Polynomial, variables
from .relax import PolyProblem, assemble_relaxation
from .sdp import SolverConfig, solve

HANDEYE_METHODS = ("uvhec", "qhec", "dqhec")
ROBOTWORLD_METHODS = ("uvherwc", "qherwc", "dqherwc")
METHODS = HANDEYE_METHODS + ROBOTWORLD_METHODS

AXIS_TOL = 1e-3
SIGN_TOL = 1e-3


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _axis(R) -> Optional[np.ndarray]:
    w = rotation_log(R)
    n = np.linalg.norm(w)
    return None if n < 1e-12 else w / n


def _check_axes(motions: Sequence[MotionPair]) -> None:
    axes = [a for a in (_axis(mp.b.R) for mp in motions) if a is not None]
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            ang = np.arccos(np.clip(abs(axes[i] @ axes[j]), 0.0, 1.0))
            if ang > AXIS_TOL:
                return
    raise DegenerateMotionError("need two motions with non-parallel rotation axes")


@dataclass(frozen=True)
class CalibrationTask:
    """Input data of a calibration.

    Exactly the data needed by one family of methods must be present:
    ``motions`` for hand-eye methods, ``absolute_poses`` for robot-world
    methods. A task with absolute poses also serves hand-eye methods through
    its pairwise relative motions.

    Attributes:
        motions: relative motion pairs (A_i, B_i).
        absolute_poses: absolute pose pairs (A'_i, B'_i).
        scale: length unit divisor already applied to the translations.
    """

    motions: Optional[Tuple[MotionPair, ...]] = None
    absolute_poses: Optional[Tuple[AbsolutePosePair, ...]] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.motions is None and self.absolute_poses is None:
            raise InvalidArgumentError("task needs motions or absolute poses")
        if self.motions is not None:
            object.__setattr__(self, "motions", tuple(self.motions))
            if len(self.motions) < 2:
                raise DegenerateMotionError("hand-eye calibration needs at least two motions")
            _check_axes(self.motions)
        if self.absolute_poses is not None:
            object.__setattr__(self, "absolute_poses", tuple(self.absolute_poses))
            if len(self.absolute_poses) < 3:
                raise DegenerateMotionError("robot-world calibration needs at least three pose pairs")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise InvalidArgumentError("scale must be positive")

    @property
    def kind(self) -> str:
        return "robotworld" if self.absolute_poses is not None else "handeye"

    def relative_motions(self) -> Tuple[MotionPair, ...]:
        """Motions of the task; for absolute poses all pairs i < j."""
        if self.motions is not None:
            return self.motions
        return pairwise_motions(self.absolute_poses)

    def translations(self) -> List[np.ndarray]:
        pairs = self.absolute_poses if self.absolute_poses is not None else self.motions
        out = []
        for p in pairs:
            out.extend((p.a.t, p.b.t))
        return out


def pairwise_motions(poses: Sequence[AbsolutePosePair]) -> Tuple[MotionPair, ...]:
    """Relative motions A = A'_j^-1 A'_i, B = B'_j^-1 B'_i for every i < j."""
    out = []
    for i in range(len(poses)):
        for j in range(i + 1, len(poses)):
            out.append(
                MotionPair(relative_motion(poses[i].a, poses[j].a), relative_motion(poses[i].b, poses[j].b))
            )
    return tuple(out)


def handeye_task(task: CalibrationTask) -> CalibrationTask:
    if task.motions is not None:
        return CalibrationTask(motions=task.motions, scale=task.scale)
    return CalibrationTask(motions=task.relative_motions(), scale=task.scale)


def scale_task(task: CalibrationTask) -> CalibrationTask:
    """Divide all translations by the longest one.

    The returned task records the cumulative divisor in ``scale``. A task
    without translations is returned unchanged.
    """
    alpha = max((float(np.linalg.norm(t)) for t in task.translations()), default=0.0)
    # already unit-scaled up to rounding
    if alpha == 0.0 or abs(alpha - 1.0) <= 1e-12:
        return task

    def sc(p: Pose) -> Pose:
        return p.scaled(1.0 / alpha)

    motions = None if task.motions is None else tuple(MotionPair(sc(m.a), sc(m.b)) for m in task.motions)
    poses = None if task.absolute_poses is None else tuple(
        AbsolutePosePair(sc(p.a), sc(p.b)) for p in task.absolute_poses
    )
    return CalibrationTask(motions=motions, absolute_poses=poses, scale=task.scale * alpha)


# ---------------------------------------------------------------------------
# symbolic helpers on lists of polynomials
# ---------------------------------------------------------------------------

def _qmul(p, q):
    return [
        p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
        p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
        p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
        p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0],
    ]


def _dqmul(p, q):
    real = _qmul(p[:4], q[:4])
    dual = [x + y for x, y in zip(_qmul(p[:4], q[4:]), _qmul(p[4:], q[:4]))]
    return real + dual


def _qconj(q):
    return [q[0], -q[1], -q[2], -q[3]]


def _rot_q(q):
    q1, q2, q3, q4 = q
    return [
        [q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4, 2 * (q2 * q3 - q4 * q1), 2 * (q2 * q4 + q3 * q1)],
        [2 * (q2 * q3 + q4 * q1), q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4, 2 * (q3 * q4 - q2 * q1)],
        [2 * (q2 * q4 - q3 * q1), 2 * (q3 * q4 + q2 * q1), q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4],
    ]


def _rot_uv(u, v):
    w = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    return [[u[i], v[i], w[i]] for i in range(3)]


def _matmul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(len(B))), start=0) for j in range(len(B[0]))] for i in range(len(A))]


def _matvec(A, x):
    return [sum((A[i][k] * x[k] for k in range(len(x))), start=0) for i in range(len(A))]


def _sumsq(entries, zero):
    out = zero
    for e in entries:
        out = out + e * e
    return out


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

_VAR_NAMES = {
    "uvhec": ["u1", "u2", "u3", "v1", "v2", "v3", "t1", "t2", "t3"],
    "qhec": ["q1", "q2", "q3", "q4", "t1", "t2", "t3"],
    "dqhec": [f"q{i}" for i in range(1, 9)],
    "uvherwc": [f"{n}X" for n in ("u1", "u2", "u3", "v1", "v2", "v3", "t1", "t2", "t3")]
    + [f"{n}Z" for n in ("u1", "u2", "u3", "v1", "v2", "v3", "t1", "t2", "t3")],
    "qherwc": [f"{n}X" for n in ("q1", "q2", "q3", "q4", "t1", "t2", "t3")]
    + [f"{n}Z" for n in ("q1", "q2", "q3", "q4", "t1", "t2", "t3")],
    "dqherwc": [f"q{i}X" for i in range(1, 9)] + [f"q{i}Z" for i in range(1, 9)],
}

_DQ_METHODS = ("dqhec", "dqherwc")


@dataclass(frozen=True)
class ObjectiveTemplate:
    """Objective as sum over poses of c * x^U * data^D.

    Attributes:
        method: formulation name.
        num_vars: number of unknowns.
        data_width: data symbols per pose (24 for matrices, 16 for dual quaternions).
        exps: (T, num_vars) unknown exponents.
        data_idx: (T, k) indices into the per-pose data with a trailing ``data_width``
            meaning "1"; the data monomial is the product of the indexed values.
        coef: (T,) coefficients.
    """

    method: str
    num_vars: int
    data_width: int
    exps: np.ndarray
    data_idx: np.ndarray
    coef: np.ndarray

    @property
    def structural_monomial_count(self) -> int:
        return len({tuple(r) for r in self.exps})

    def instantiate(self, data) -> Polynomial:
        """Objective polynomial for an (n, data_width) array of pose data."""
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != self.data_width:
            raise InvalidArgumentError(f"pose data must have shape (n, {self.data_width})")
        ext = np.hstack([data, np.ones((len(data), 1))])
        vals = np.ones((len(data), len(self.coef)))
        for col in self.data_idx.T:
            vals *= ext[:, col]
        w = self.coef * vals.sum(axis=0)
        uniq, inv = np.unique(self.exps, axis=0, return_inverse=True)
        c = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        return Polynomial(self.num_vars, {tuple(int(e) for e in k): float(v) for k, v in zip(uniq, c)})


def _residuals(method: str, x, a, b):
    """Residual entries of one pose pair in symbolic form."""
    if method in ("uvhec", "qhec", "uvherwc", "qherwc"):
        RA = [a[0:3], a[3:6], a[6:9]]
        tA = a[9:12]
        RB = [b[0:3], b[3:6], b[6:9]]
        tB = b[9:12]
        if method == "uvhec":
            RX, tX = _rot_uv(x[0:3], x[3:6]), x[6:9]
            RZ, tZ = RX, tX
        elif method == "qhec":
            RX, tX = _rot_q(x[0:4]), x[4:7]
            RZ, tZ = RX, tX
        elif method == "uvherwc":
            RX, tX = _rot_uv(x[0:3], x[3:6]), x[6:9]
            RZ, tZ = _rot_uv(x[9:12], x[12:15]), x[15:18]
        else:
            RX, tX = _rot_q(x[0:4]), x[4:7]
            RZ, tZ = _rot_q(x[7:11]), x[11:14]
        # A X - Z B on the rotation block and the translation column
        P, Q = _matmul(RA, RX), _matmul(RZ, RB)
        rot = [P[i][j] - Q[i][j] for i in range(3) for j in range(3)]
        u, w = _matvec(RA, tX), _matvec(RZ, tB)
        trans = [u[i] + tA[i] - w[i] - tZ[i] for i in range(3)]
        return rot + trans
    if method == "dqhec":
        qc = _qconj(x[0:4]) + _qconj(x[4:8])
        r = _dqmul(_dqmul(x, b), qc)
        return [a[i] - r[i] for i in range(8)]
    if method == "dqherwc":
        left = _dqmul(a, x[0:8])
        right = _dqmul(x[8:16], b)
        return [left[i] - right[i] for i in range(8)]
    raise InvalidArgumentError(f"unknown method {method!r}")


@lru_cache(maxsize=None)
def objective_template(method: str) -> ObjectiveTemplate:
    """Symbolic template of the objective of ``method``."""
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    m = len(_VAR_NAMES[method])
    W = 16 if method in _DQ_METHODS else 24
    syms = variables(m + W)
    x, a, b = syms[:m], syms[m : m + W // 2], syms[m + W // 2 :]
    f = _sumsq(_residuals(method, x, a, b), Polynomial(m + W))
    maxd = max(sum(k[m:]) for k, _ in f.items())
    T = len(f)
    exps = np.zeros((T, m), dtype=np.int64)
    didx = np.full((T, max(maxd, 1)), W, dtype=np.int64)
    coef = np.zeros(T)
    for r, (k, c) in enumerate(sorted(f.items())):
        exps[r] = k[:m]
        flat = [i for i, e in enumerate(k[m:]) for _ in range(e)]
        didx[r, : len(flat)] = flat
        coef[r] = c
    return ObjectiveTemplate(method, m, W, exps, didx, coef)


def pose_data(p: Pose) -> np.ndarray:
    return np.concatenate((p.R.ravel(), p.t))


def task_data(method: str, task: CalibrationTask, signs: Optional[Sequence[float]] = None) -> np.ndarray:
    """Per-pose data rows consumed by the objective template."""
    if method in HANDEYE_METHODS:
        pairs = [(mp.a, mp.b) for mp in task.relative_motions()]
    else:
        if task.absolute_poses is None:
            raise InvalidArgumentError(f"{method} needs absolute pose pairs")
        pairs = [(p.a, p.b) for p in task.absolute_poses]
    if method in _DQ_METHODS:
        if signs is None or len(signs) != len(pairs):
            raise InvalidArgumentError("one sign per pose pair is required")
        return np.array([np.concatenate((pose_to_dq(a), s * pose_to_dq(b))) for (a, b), s in zip(pairs, signs)])
    return np.array([np.concatenate((pose_data(a), pose_data(b))) for a, b in pairs])


# ---------------------------------------------------------------------------
# problem builders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationConfig:
    """Options of :func:`calibrate`.

    Attributes:
        order: relaxation order.
        solver: interior-point settings.
        tx_bound: bound on t_X^T t_X in scaled units.
        tz_bound: bound on t_Z^T t_Z in scaled units.
        sign_tol: screw-congruence tolerance used by dqhec.
        sign_cap: largest pose count for the dqherwc sign search.
        reframe_retry: retry once in a randomly rotated frame when uncertified.
        seed: seed of the reframing rotation.
    """

    order: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    tx_bound: float = 2.0
    tz_bound: float = 10.0
    sign_tol: float = SIGN_TOL
    sign_cap: int = baselines.SIGN_SEARCH_CAP
    reframe_retry: bool = True
    seed: int = 0


def _dot(a, b):
    return sum((x * y for x, y in zip(a, b)), start=Polynomial(a[0].num_vars))


def _uv_constraints(u, v):
    return [_dot(u, u) - 1, _dot(v, v) - 1, _dot(u, v)]


def _problem(method: str, objective: Polynomial, cfg: CalibrationConfig) -> PolyProblem:
    m = objective.num_vars
    x = variables(m)
    eq, ineq = [], []
    if method == "uvhec":
        eq += _uv_constraints(x[0:3], x[3:6])
        ineq.append(cfg.tx_bound - _dot(x[6:9], x[6:9]))
    elif method == "qhec":
        eq.append(_dot(x[0:4], x[0:4]) - 1)
        ineq += [x[0], cfg.tx_bound - _dot(x[4:7], x[4:7])]
    elif method == "dqhec":
        eq += [_dot(x[0:4], x[0:4]) - 1, _dot(x[0:4], x[4:8])]
        # |q'| = |t| / 2 for a unit dual quaternion
        ineq += [x[0], cfg.tx_bound / 4 - _dot(x[4:8], x[4:8])]
    elif method == "uvherwc":
        eq += _uv_constraints(x[0:3], x[3:6]) + _uv_constraints(x[9:12], x[12:15])
        ineq += [cfg.tx_bound - _dot(x[6:9], x[6:9]), cfg.tz_bound - _dot(x[15:18], x[15:18])]
    elif method == "qherwc":
        eq += [_dot(x[0:4], x[0:4]) - 1, _dot(x[7:11], x[7:11]) - 1]
        ineq += [x[0], x[7], cfg.tx_bound - _dot(x[4:7], x[4:7]), cfg.tz_bound - _dot(x[11:14], x[11:14])]
    elif method == "dqherwc":
        eq += [
            _dot(x[0:4], x[0:4]) - 1,
            _dot(x[0:4], x[4:8]),
            _dot(x[8:12], x[8:12]) - 1,
            _dot(x[8:12], x[12:16]),
        ]
        ineq += [x[0], x[8], cfg.tx_bound / 4 - _dot(x[4:8], x[4:8]), cfg.tz_bound / 4 - _dot(x[12:16], x[12:16])]
    return PolyProblem(objective, tuple(ineq), tuple(eq), tuple(_VAR_NAMES[method]))


def build_problem(method: str, task: CalibrationTask, signs=None, cfg: CalibrationConfig | None = None) -> PolyProblem:
    cfg = cfg or CalibrationConfig()
    f = objective_template(method).instantiate(task_data(method, task, signs))
    return _problem(method, f, cfg)


def build_f1(task: CalibrationTask, cfg: CalibrationConfig | None = None) -> PolyProblem:
    """uvhec: rotation parametrized by two orthonormal columns u, v."""
    return build_problem("uvhec", task, cfg=cfg)


def build_f2(task: CalibrationTask, cfg: CalibrationConfig | None = None) -> PolyProblem:
    """qhec: rotation parametrized by a unit quaternion with q1 >= 0."""
    return build_problem("qhec", task, cfg=cfg)


def build_f3(task: CalibrationTask, signs: Sequence[float], cfg: CalibrationConfig | None = None) -> PolyProblem:
    """dqhec: unit dual quaternion; residual a_i - q (x) (s_i b_i) (x) q*."""
    return build_problem("dqhec", task, signs, cfg)


def build_f4(task: CalibrationTask, cfg: CalibrationConfig | None = None) -> PolyProblem:
    """uvherwc: X and Z each parametrized by (u, v, t)."""
    return build_problem("uvherwc", task, cfg=cfg)


def build_f5(task: CalibrationTask, cfg: CalibrationConfig | None = None) -> PolyProblem:
    """qherwc: X and Z each parametrized by (q, t)."""
    return build_problem("qherwc", task, cfg=cfg)


def build_f6(task: CalibrationTask, signs: Sequence[float], cfg: CalibrationConfig | None = None) -> PolyProblem:
    """dqherwc: residual a'_i (x) qX - qZ (x) (s_i b'_i)."""
    return build_problem("dqherwc", task, signs, cfg)


# ---------------------------------------------------------------------------
# signs
# ---------------------------------------------------------------------------

def resolve_signs_dqhec(task: CalibrationTask, tol: float = SIGN_TOL) -> List[int]:
    """Per-motion sign of b_i making (a1, a1') match (b1, b1') within tol.

    Near half-turn motions can pass the test with both signs; those take the
    sign whose rotation part agrees with the sign-free park94 estimate.
    """
    motions = task.relative_motions()
    qx = None
    out = []
    for k, mp in enumerate(motions):
        a, b = pose_to_dq(mp.a), pose_to_dq(mp.b)
        ok = [s for s in (1, -1) if abs(a[0] - s * b[0]) <= tol and abs(a[4] - s * b[4]) <= tol]
        if not ok:
            _, dev = baselines._congruent_sign(a, b)
            raise IncompatibleMotionError(
                f"motion {k}: no sign makes the screws congruent (deviation {dev:.2e})"
            )
        if len(ok) == 2:
            if qx is None:
                qx = rotmat_to_quat(baselines.park94(motions).R)
            res = {s: np.linalg.norm(quat_mul(a[:4], qx) - s * quat_mul(qx, b[:4])) for s in (1, -1)}
            ok = [min(res, key=lambda s: (res[s], -s))]
        out.append(int(ok[0]))
    return out


def resolve_signs_dq_herwc(task: CalibrationTask, cap: int = baselines.SIGN_SEARCH_CAP) -> List[int]:
    """Signs of b'_i chosen by the exhaustive Li10 residual search."""
    if task.absolute_poses is None:
        raise InvalidArgumentError("dqherwc needs absolute pose pairs")
    a = [pose_to_dq(p.a) for p in task.absolute_poses]
    b = [pose_to_dq(p.b) for p in task.absolute_poses]
    return baselines.resolve_signs(a, b, cap)


# ---------------------------------------------------------------------------
# reconstruction and objective evaluation
# ---------------------------------------------------------------------------

def _unit_dq(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    r = v[:4] / np.linalg.norm(v[:4])
    d = v[4:] / np.linalg.norm(v[:4])
    return np.concatenate((r, d - (r @ d) * r))


def _pose_from_params(kind: str, p) -> Pose:
    p = np.asarray(p, dtype=float)
    if kind == "uv":
        u, v, t = p[0:3], p[3:6], p[6:9]
        return Pose(nearest_rotation(np.column_stack((u, v, np.cross(u, v)))), t, tol=np.inf)
    if kind == "q":
        q = p[0:4] / np.linalg.norm(p[0:4])
        return Pose(quat_to_rotmat(q), p[4:7], tol=np.inf)
    return dq_to_pose(_unit_dq(p))


def _params_from_pose(kind: str, P: Pose) -> np.ndarray:
    if kind == "uv":
        return np.concatenate((P.R[:, 0], P.R[:, 1], P.t))
    if kind == "q":
        return np.concatenate((rotmat_to_quat(P.R), P.t))
    return pose_to_dq(P)


def _kind(method: str) -> str:
    return "uv" if method.startswith("uv") else ("dq" if method.startswith("dq") else "q")


def split_params(method: str, x) -> Tuple[Pose, Optional[Pose]]:
    """Poses (X, Z) from a point of the method's variable space."""
    k = _kind(method)
    if method in HANDEYE_METHODS:
        return _pose_from_params(k, x), None
    h = len(x) // 2
    return _pose_from_params(k, x[:h]), _pose_from_params(k, x[h:])


def join_params(method: str, X: Pose, Z: Optional[Pose] = None) -> np.ndarray:
    k = _kind(method)
    if method in HANDEYE_METHODS:
        return _params_from_pose(k, X)
    return np.concatenate((_params_from_pose(k, X), _params_from_pose(k, Z)))


def direct_objective(method: str, task: CalibrationTask, X: Pose, Z: Optional[Pose] = None, signs=None) -> float:
    """Objective of ``method`` at (X, Z) evaluated from the poses directly."""
    if method in ("uvhec", "qhec"):
        return float(sum(np.sum((mp.a.matrix @ X.matrix - X.matrix @ mp.b.matrix) ** 2) for mp in task.relative_motions()))
    if method in ("uvherwc", "qherwc"):
        return float(
            sum(np.sum((p.a.matrix @ X.matrix - Z.matrix @ p.b.matrix) ** 2) for p in task.absolute_poses)
        )
    if method == "dqhec":
        q = pose_to_dq(X)
        qc = dq_conj(q)
        return float(
            sum(
                np.sum((pose_to_dq(mp.a) - dq_mul(dq_mul(q, s * pose_to_dq(mp.b)), qc)) ** 2)
                for mp, s in zip(task.relative_motions(), signs)
            )
        )
    qx, qz = pose_to_dq(X), pose_to_dq(Z)
    return float(
        sum(
            np.sum((dq_mul(pose_to_dq(p.a), qx) - dq_mul(qz, s * pose_to_dq(p.b))) ** 2)
            for p, s in zip(task.absolute_poses, signs)
        )
    )


def _prepared(method: str, task: CalibrationTask) -> CalibrationTask:
    """The scaled task that ``calibrate`` optimizes over for ``method``."""
    if method in HANDEYE_METHODS:
        return scale_task(handeye_task(task))
    if task.absolute_poses is None:
        raise InvalidArgumentError(f"{method} needs absolute pose pairs, the task holds relative motions")
    return scale_task(CalibrationTask(absolute_poses=task.absolute_poses, scale=task.scale))


def objective_at(method: str, task: CalibrationTask, X: Pose, Z: Optional[Pose] = None) -> float:
    """Objective of ``method`` at poses given in the task's units, in the scaled units of ``calibrate``."""
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    scaled = _prepared(method, task)
    inv = task.scale / scaled.scale
    signs = None
    if method == "dqhec":
        signs = resolve_signs_dqhec(scaled)
    elif method == "dqherwc":
        signs = resolve_signs_dq_herwc(scaled)
    return direct_objective(method, scaled, X.scaled(inv), None if Z is None else Z.scaled(inv), signs)


def relaxation_for(method: str, task: CalibrationTask, cfg: CalibrationConfig | None = None):
    """The polynomial problem and its relaxation exactly as ``calibrate`` first solves them.

    Returns:
        (PolyProblem, SdpProblem, scaled task).
    """
    cfg = cfg or CalibrationConfig()
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    scaled = _prepared(method, task)
    signs = None
    if method == "dqhec":
        signs = resolve_signs_dqhec(scaled, cfg.sign_tol)
    elif method == "dqherwc":
        signs = resolve_signs_dq_herwc(scaled, cfg.sign_cap)
    prob = build_problem(method, scaled, signs, cfg)
    sdp = assemble_relaxation(prob, cfg.order)
    sdp.labels["method"] = method
    return prob, sdp, scaled


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    """Output of :func:`calibrate`.

    Attributes:
        X: hand-eye transform, translation in input units.
        Z: robot-world transform, or None for hand-eye methods.
        objective: objective at the returned pose(s), scaled units.
        lower_bound: relaxation value, scaled units.
        certified: whether the relaxation was certified exact.
        method: formulation name.
        scale: translation divisor alpha.
        sign_assignment: b-signs used by dual-quaternion methods.
        diagnostics: solver and extraction details.
    """

    X: Pose
    Z: Optional[Pose]
    objective: float
    lower_bound: float
    certified: bool
    method: str
    scale: float
    sign_assignment: Optional[List[int]] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)


def _reframe(task: CalibrationTask, V: np.ndarray, W: np.ndarray) -> CalibrationTask:
    Vp, Wp = Pose(V, tol=1e-9), Pose(W, tol=1e-9)
    if task.kind == "handeye":
        motions = tuple(MotionPair(Vp @ mp.a @ Vp.inverse(), mp.b) for mp in task.motions)
        return CalibrationTask(motions=motions, scale=task.scale)
    poses = tuple(AbsolutePosePair(Wp @ p.a @ Vp.inverse(), p.b) for p in task.absolute_poses)
    return CalibrationTask(absolute_poses=poses, scale=task.scale)


def _run_once(method: str, task: CalibrationTask, cfg: CalibrationConfig):
    signs = None
    if method == "dqhec":
        signs = resolve_signs_dqhec(task, cfg.sign_tol)
    elif method == "dqherwc":
        signs = resolve_signs_dq_herwc(task, cfg.sign_cap)
    prob = build_problem(method, task, signs, cfg)
    t0 = time.perf_counter()
    sdp = assemble_relaxation(prob, cfg.order)
    t1 = time.perf_counter()
    sol = solve(sdp, cfg.solver)
    cert = certify_and_extract(sol.y, prob, cfg.order)
    polish_step = 0.0
    if cert.extracted_points:
        x = cert.extracted_points[0]
        if cert.certified:
            xp = polish_point(prob, x)
            polish_step = float(np.linalg.norm(xp - x))
            x = xp
    else:
        # best effort: the first-order moments are still the relaxation's estimate
        x = sol.y[1 : prob.num_vars + 1] / sol.y[0]
    X, Z = split_params(method, x)
    diag = dict(
        status=sol.status,
        iterations=sol.iterations,
        gap=sol.achieved_gap,
        solve_time=sol.wall_time,
        assemble_time=t1 - t0,
        moments=sdp.num_moments,
        rank=cert.rank_delta,
        rank_lower=cert.rank_delta_minus_1,
        flat=cert.flat,
        certificate_reason=cert.reason,
        point_objective=cert.point_objective,
        max_violation=cert.max_violation,
        polish_step=polish_step,
    )
    certified = bool(cert.certified and sol.status == "optimal")
    return X, Z, prob, signs, sol, cert, certified, diag


def calibrate(task: CalibrationTask, method: str, cfg: CalibrationConfig | None = None) -> CalibrationResult:
    """Globally optimal calibration with one of the six formulations.

    Args:
        task: input data; hand-eye methods use its relative motions.
        method: one of ``METHODS``.
        cfg: pipeline options.

    Returns:
        CalibrationResult with translations in the task's units.
    """
    cfg = cfg or CalibrationConfig()
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ROBOTWORLD_METHODS and task.absolute_poses is None:
        raise InvalidArgumentError(f"{method} needs absolute pose pairs, the task holds relative motions")
    scaled = _prepared(method, task)
    alpha = scaled.scale / task.scale
    X, Z, prob, signs, sol, cert, certified, diag = _run_once(method, scaled, cfg)
    diag["reframed"] = False
    if not certified and cfg.reframe_retry:
        first_reason = cert.reason or f"solver status {sol.status}"
        rng = np.random.default_rng(cfg.seed)
        V, W = random_rotation(rng), random_rotation(rng)
        X2, Z2, prob2, signs2, sol2, cert2, cert_ok2, diag2 = _run_once(method, _reframe(scaled, V, W), cfg)
        if cert_ok2:
            Vi, Wi = Pose(V.T, tol=1e-9), Pose(W.T, tol=1e-9)
            X = Vi @ X2
            Z = None if Z2 is None else Wi @ Z2
            sol, cert, certified, diag = sol2, cert2, True, diag2
            diag["reframed"] = True
        diag["first_attempt_reason"] = first_reason
    # objective of the first-attempt problem (scaled, original frame) at the canonical parameters
    objective = prob.objective(join_params(method, X, Z))
    return CalibrationResult(
        X=X.scaled(alpha),
        Z=None if Z is None else Z.scaled(alpha),
        objective=float(objective),
        lower_bound=float(sol.objective),
        certified=certified,
        method=method,
        scale=alpha,
        sign_assignment=None if signs is None else [int(s) for s in signs],
        diagnostics=diag,
    )

