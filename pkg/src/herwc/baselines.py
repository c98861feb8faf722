"""Closed-form reference methods: Park-Martin, Daniilidis and Li dual quaternion."""

from __future__ import annotations

import itertools
import warnings
from typing import List, Sequence, Tuple

import numpy as np

from .errors import CombinatorialLimitError, DegenerateMotionError, InvalidArgumentError
from .geom import (
    AbsolutePosePair,
    MotionPair,
    Pose,
    canonical_quat,
    dq_left_matrix,
    dq_right_matrix,
    dq_to_pose,
    nearest_rotation,
    pose_to_dq,
    rotation_angle,
    rotation_log,
)

MIN_ANGLE = 1e-6
SIGN_SEARCH_CAP = 16


def _skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def park94(motions: Sequence[MotionPair]) -> Pose:
    """Rotation from matched log-axes, then translation by linear least squares."""
    if len(motions) < 2:
        raise DegenerateMotionError("need at least two motions")
    M = np.zeros((3, 3))
    used = 0
    for mp in motions:
        if rotation_angle(mp.a.R) < MIN_ANGLE or rotation_angle(mp.b.R) < MIN_ANGLE:
            continue
        M += np.outer(rotation_log(mp.b.R), rotation_log(mp.a.R))
        used += 1
    s = np.linalg.svd(M, compute_uv=False)
    if used < 2 or s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateMotionError("rotation axes do not span two directions")
    # (M^T M)^{-1/2} M^T is the orthogonal polar factor of M^T
    R = nearest_rotation(M.T)
    C = np.vstack([mp.a.R - np.eye(3) for mp in motions])
    d = np.concatenate([R @ mp.b.t - mp.a.t for mp in motions])
    t = np.linalg.lstsq(C, d, rcond=None)[0]
    return Pose(R, t, tol=1e-9)


def _congruent_sign(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Sign s making (a1, a1') closest to s (b1, b1'), and the deviation."""
    dev = {s: abs(a[0] - s * b[0]) + abs(a[4] - s * b[4]) for s in (1.0, -1.0)}
    s = min(dev, key=lambda k: (dev[k], -k))
    return s, dev[s]


def _solve_dq_pair(v1: np.ndarray, v2: np.ndarray, real: slice, dual: slice):
    """Combine two null vectors so the (real, dual) parts form a unit dual quaternion.

    Returns (vector, ok); ``ok`` is False when the quadratic has no real root.
    """
    u1, u2 = v1[real], v2[real]
    w1, w2 = v1[dual], v2[dual]
    a = u1 @ w1
    b = u1 @ w2 + u2 @ w1
    c = u2 @ w2
    disc = b * b - 4 * a * c
    if disc < 0:
        return None, False
    cand = []
    if abs(a) > 1e-14 * max(abs(b), abs(c), 1e-300):
        for sgn in (1.0, -1.0):
            s = (-b + sgn * np.sqrt(disc)) / (2 * a)
            val = s * s * (u1 @ u1) + 2 * s * (u1 @ u2) + u2 @ u2
            cand.append((val, s, 1.0))
    else:
        # a ~ 0: one root has lambda2 = 0, the other is s = -c / b
        cand.append((u1 @ u1, 1.0, 0.0))
        if abs(b) > 1e-300:
            s = -c / b
            cand.append((s * s * (u1 @ u1) + 2 * s * (u1 @ u2) + u2 @ u2, s, 1.0))
    val, s, l2 = max(cand, key=lambda t: t[0])
    if val <= 0:
        return None, False
    lam2 = 1.0 / np.sqrt(val)
    if l2 == 0.0:
        return v1 / np.sqrt(u1 @ u1), True
    return s * lam2 * v1 + lam2 * v2, True


def _fallback_dq(v: np.ndarray, real: slice, dual: slice) -> np.ndarray:
    out = v / np.linalg.norm(v[real])
    q = out[real]
    out[dual] = out[dual] - (q @ out[dual]) * q
    return out


def _project_unit_dq(q: np.ndarray) -> np.ndarray:
    q = np.array(q, dtype=float)
    r = q[:4] / np.linalg.norm(q[:4])
    d = q[4:] / np.linalg.norm(q[:4])
    d = d - (r @ d) * r
    out = np.concatenate((r, d))
    if not np.array_equal(canonical_quat(r), r):
        out = -out
    return out


def dan98_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """6x8 block linking the imaginary screw parts of a and b to the unknown."""
    av, adv, bv, bdv = a[1:4], a[5:8], b[1:4], b[5:8]
    T = np.zeros((6, 8))
    T[:3, 0] = av - bv
    T[:3, 1:4] = _skew(av + bv)
    T[3:, 0] = adv - bdv
    T[3:, 1:4] = _skew(adv + bdv)
    T[3:, 4] = av - bv
    T[3:, 5:8] = _skew(av + bv)
    return T


def dan98(motions: Sequence[MotionPair], return_flag: bool = False):
    """Simultaneous rotation/translation solution from dual-quaternion screws.

    Args:
        motions: relative motion pairs.
        return_flag: also return whether the single-vector fallback was used.
    """
    blocks = []
    skipped = 0
    for mp in motions:
        if rotation_angle(mp.a.R) < MIN_ANGLE or rotation_angle(mp.b.R) < MIN_ANGLE:
            skipped += 1
            continue
        a = pose_to_dq(mp.a)
        b = pose_to_dq(mp.b)
        s, _ = _congruent_sign(a, b)
        blocks.append(dan98_matrix(a, s * b))
    if skipped:
        warnings.warn(f"dan98: dropped {skipped} motion(s) with near-zero rotation", RuntimeWarning)
    if len(blocks) < 2:
        raise DegenerateMotionError("fewer than two motions with a defined screw axis")
    T = np.vstack(blocks)
    _, sv, Vt = np.linalg.svd(T)
    if sv[5] <= 1e-9 * sv[0]:
        raise DegenerateMotionError("screw axes do not determine the transform")
    q, ok = _solve_dq_pair(Vt[6], Vt[7], slice(0, 4), slice(4, 8))
    if not ok:
        q = _fallback_dq(Vt[7], slice(0, 4), slice(4, 8))
    X = dq_to_pose(_project_unit_dq(q))
    return (X, not ok) if return_flag else X


def li10_matrix(a_dqs, b_dqs, signs) -> np.ndarray:
    """Stacked 8x16 blocks of a_i (x) qX - qZ (x) (s_i b_i) = 0."""
    rows = []
    for a, b, s in zip(a_dqs, b_dqs, signs):
        rows.append(np.hstack([dq_left_matrix(a), -dq_right_matrix(s * np.asarray(b))]))
    return np.vstack(rows)


def _li10_solve(a_dqs, b_dqs, signs):
    T = li10_matrix(a_dqs, b_dqs, signs)
    _, sv, Vt = np.linalg.svd(T)
    if len(sv) < 16:
        sv = np.concatenate((sv, np.zeros(16 - len(sv))))
    # real part of qX: 0:4, dual part of qX: 4:8
    v, ok = _solve_dq_pair(Vt[14], Vt[15], slice(0, 4), slice(4, 8))
    if not ok:
        v = _fallback_dq(Vt[15], slice(0, 4), slice(4, 8))
    if v[0] < 0 or (v[0] == 0 and np.any(canonical_quat(v[:4]) != v[:4])):
        v = -v
    return v[:8], v[8:], float(sv[-1]), ok, sv


def li10_dq(poses: Sequence[AbsolutePosePair], signs: Sequence[float], return_flag: bool = False):
    """Linear dual-quaternion robot-world solution for given b-signs.

    Returns:
        (X, Z, residual), residual being the smallest singular value.
    """
    if len(poses) < 3:
        raise DegenerateMotionError("need at least three pose pairs")
    if len(signs) != len(poses):
        raise InvalidArgumentError("one sign per pose pair is required")
    a_dqs = [pose_to_dq(p.a) for p in poses]
    b_dqs = [pose_to_dq(p.b) for p in poses]
    qx, qz, res, ok, sv = _li10_solve(a_dqs, b_dqs, signs)
    if sv[13] <= 1e-9 * sv[0]:
        raise DegenerateMotionError("pose pairs do not determine X and Z")
    X = dq_to_pose(_project_unit_dq(qx))
    Z = dq_to_pose(_project_unit_dq(qz))
    out = (X, Z, res)
    return out + (not ok,) if return_flag else out


def li10_residuals(a_dqs, b_dqs, sign_vectors: np.ndarray) -> np.ndarray:
    """Smallest singular value of the Li10 system for each row of sign_vectors."""
    A = np.stack([dq_left_matrix(a) for a in a_dqs])  # (m, 8, 8)
    B = np.stack([dq_right_matrix(b) for b in b_dqs])
    out = np.empty(len(sign_vectors))
    step = 1024
    for k in range(0, len(sign_vectors), step):
        S = sign_vectors[k : k + step]
        T = np.concatenate([np.broadcast_to(A, (len(S),) + A.shape), -S[:, :, None, None] * B[None]], axis=3)
        T = T.reshape(len(S), -1, 16)
        # smallest singular value via the 16x16 Gram matrix
        G = np.einsum("kij,kil->kjl", T, T)
        w = np.linalg.eigvalsh(G)[:, 0]
        out[k : k + step] = np.sqrt(np.maximum(w, 0.0))
    return out


def resolve_signs(a_dqs, b_dqs, cap: int = SIGN_SEARCH_CAP) -> List[int]:
    """Exhaustive sign search for the b-quaternions of a robot-world task.

    The residual is unchanged when every sign flips, so only vectors with a
    leading +1 are scored; the global sign is then fixed so that the recovered
    qZ has a nonnegative real part when qX does.
    """
    m = len(a_dqs)
    if m > cap:
        raise CombinatorialLimitError(f"{m} poses exceed the sign-search cap of {cap}")
    if m == 0:
        return []
    tails = np.array(list(itertools.product((1.0, -1.0), repeat=m - 1)), dtype=float).reshape(2 ** (m - 1), m - 1)
    S = np.hstack([np.ones((len(tails), 1)), tails])
    res = li10_residuals(a_dqs, b_dqs, S)
    best = S[int(np.argmin(res))]
    _, qz, _, _, _ = _li10_solve(a_dqs, b_dqs, best)
    lead = next((c for c in qz[:4] if abs(c) > 1e-12), 1.0)
    if lead < 0:
        best = -best
    return [int(s) for s in best]
