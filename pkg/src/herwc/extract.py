"""Flatness test and rank-one minimizer extraction from moment vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import List

import numpy as np

from .errors import NumericalFailureError
from .poly import MomentIndexer, riesz_linearize
from .relax import PolyProblem, build_moment_matrix

RANK_TOL = 1e-6
CHECK_TOL = 1e-6


@dataclass
class Certificate:
    """Outcome of the optimality test.

    Attributes:
        rank_delta: numerical rank of M_delta(y).
        rank_delta_minus_1: numerical rank of M_{delta-1}(y).
        flat: whether the two ranks agree.
        singular_values: singular values of M_delta(y), descending.
        extracted_points: minimizers recovered from y (empty unless rank one).
        certified: flat, rank one, feasible and objective-consistent.
        bound: the relaxation value L_y(p0).
        point_objective: p0 at the extracted point, or nan.
        max_violation: largest constraint violation at the extracted point.
    """

    rank_delta: int
    rank_delta_minus_1: int
    flat: bool
    singular_values: List[float]
    extracted_points: List[np.ndarray] = field(default_factory=list)
    certified: bool = False
    bound: float = float("nan")
    point_objective: float = float("nan")
    max_violation: float = float("nan")
    reason: str = ""


def numerical_rank(s: np.ndarray, tol: float = RANK_TOL) -> int:
    if len(s) == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def certify_and_extract(y, prob: PolyProblem, delta: int, rank_tol: float = RANK_TOL) -> Certificate:
    """Rank test on the moment matrices and rank-one extraction.

    Args:
        y: moment vector of an order-``delta`` relaxation of ``prob``.
        prob: the polynomial problem that was relaxed.
        delta: relaxation order.

    Raises:
        NumericalFailureError: if y_0 is not positive.
    """
    y = np.asarray(y, dtype=float)
    m = prob.num_vars
    if y[0] <= 1e-12:
        raise NumericalFailureError(f"moment normalization y_0 = {y[0]:.3e} is not positive")
    idx = MomentIndexer.build(m, 2 * delta)
    if len(y) != idx.size:
        raise NumericalFailureError(f"moment vector has length {len(y)}, expected {idx.size}")
    M = build_moment_matrix(m, delta, idx).evaluate(y)
    n1 = comb(m + delta - 1, m)
    s = np.linalg.svd(M, compute_uv=False)
    s1 = np.linalg.svd(M[:n1, :n1], compute_uv=False)
    r, r1 = numerical_rank(s, rank_tol), numerical_rank(s1, rank_tol)
    fn = riesz_linearize(prob.objective, idx)
    bound = float(sum(v * y[k] for k, v in fn.items()))
    cert = Certificate(r, r1, r == r1, s.tolist(), bound=bound)
    if not cert.flat:
        cert.reason = f"not flat: rank {r} vs {r1}"
        return cert
    if r != 1:
        cert.reason = f"flat with rank {r}; only rank-one extraction is supported"
        return cert
    x = y[1 : m + 1] / y[0]
    cert.extracted_points = [x]
    viol = [max(0.0, -g(x)) for g in prob.inequalities] + [abs(h(x)) for h in prob.equalities]
    cert.max_violation = max(viol, default=0.0)
    cert.point_objective = prob.objective(x)
    gap = abs(cert.point_objective - bound) / (1.0 + abs(bound))
    if cert.max_violation > CHECK_TOL:
        cert.reason = f"extracted point violates constraints by {cert.max_violation:.2e}"
    elif gap > CHECK_TOL:
        cert.reason = f"objective at extracted point differs from bound by {gap:.2e}"
    else:
        cert.certified = True
    return cert


def _compile(p):
    if not len(p):
        return np.zeros((0, p.num_vars)), np.zeros(0)
    E, c = zip(*p.items())
    return np.array(E, dtype=float), np.array(c)


def _eval_compiled(Ec, x) -> float:
    E, c = Ec
    return float(np.prod(x ** E, axis=1) @ c) if len(c) else 0.0


class _Derivatives:
    """Vectorized value, gradient and Hessian of a polynomial."""

    def __init__(self, p):
        m = p.num_vars
        self.f = _compile(p)
        d1 = [p.diff(i) for i in range(m)]
        self.g = [_compile(q) for q in d1]
        self.h = [[_compile(d1[i].diff(j)) for j in range(m)] for i in range(m)]

    def value(self, x):
        return _eval_compiled(self.f, x)

    def grad(self, x):
        return np.array([_eval_compiled(g, x) for g in self.g])

    def hess(self, x):
        return np.array([[_eval_compiled(h, x) for h in row] for row in self.h])


def polish_point(prob: PolyProblem, x, max_iter: int = 8, active_tol: float = 1e-8) -> np.ndarray:
    """Newton iterations on the equality-constrained KKT system, started at x.

    Used to remove the interior-point rounding floor from an extracted
    minimizer. The input is returned unchanged when an inequality is nearly
    active, when a step fails to reduce the KKT residual, or when the result
    leaves the feasible set.
    """
    x0 = np.asarray(x, dtype=float).copy()
    if any(g(x0) < active_tol for g in prob.inequalities):
        return x0
    m = prob.num_vars
    F = _Derivatives(prob.objective)
    Hs = [_Derivatives(h) for h in prob.equalities]
    ne = len(Hs)

    def kkt(x, lam):
        J = np.array([h.grad(x) for h in Hs]).reshape(ne, m)
        r = np.concatenate((F.grad(x) + J.T @ lam, [h.value(x) for h in Hs]))
        return r, J

    J0 = np.array([h.grad(x0) for h in Hs]).reshape(ne, m)
    lam = -np.linalg.lstsq(J0.T, F.grad(x0), rcond=None)[0] if ne else np.zeros(0)
    xk = x0
    r, J = kkt(xk, lam)
    for _ in range(max_iter):
        H = F.hess(xk) + sum((l * h.hess(xk) for l, h in zip(lam, Hs)), np.zeros((m, m)))
        K = np.block([[H, J.T], [J, np.zeros((ne, ne))]])
        step = np.linalg.lstsq(K, -r, rcond=None)[0]
        xn, ln = xk + step[:m], lam + step[m:]
        rn, Jn = kkt(xn, ln)
        if not np.linalg.norm(rn) < np.linalg.norm(r):
            break
        xk, lam, r, J = xn, ln, rn, Jn
        if np.linalg.norm(step[:m]) <= 1e-15 * (1 + np.linalg.norm(xk)):
            break
    if not prob.is_feasible(xk, 1e-10) or prob.objective(xk) > prob.objective(x0) + 1e-9 * (1 + abs(prob.objective(x0))):
        return x0
    return xk
