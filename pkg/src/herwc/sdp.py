"""Primal-dual interior-point solver for moment SDPs and SDPA file I/O.

The solver works on the problem produced by :func:`herwc.relax.assemble_relaxation`::

    minimize  c . y   s.t.  F_k(y) PSD for every block,  E y = e.

Linear equalities are eliminated first (``y = y_p + N z`` with a sparse
null-space basis ``N``). Moment matrices of problems with equality
constraints have a structural kernel (the coefficient vectors of the
equality polynomials), so each block is then restricted to a face on
which it can be strictly feasible. The remaining inequality-form SDP is
solved with an infeasible-start HKM predictor-corrector method.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numba
import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import InvalidArgumentError, ParseError
from .relax import PsdBlock, SdpProblem

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

_KRON_MAX = 48  # blocks up to this size assemble their Schur part via a dense Kronecker product


@dataclass(frozen=True)
class SolverConfig:
    """Interior-point settings.

    Attributes:
        duality_gap_tol: relative gap ``|p - d| / (1 + |p| + |d|)`` at which to stop.
        feasibility_tol: relative primal and dual residual at which to stop.
        max_iterations: iteration cap.
        step_fraction: fraction of the step to the cone boundary that is taken.
        infeasibility_tol: ratio threshold for the infeasibility certificates.
    """

    duality_gap_tol: float = 1e-9
    feasibility_tol: float = 1e-9
    max_iterations: int = 200
    step_fraction: float = 0.98
    infeasibility_tol: float = 1e-8

    def __post_init__(self):
        if min(self.duality_gap_tol, self.feasibility_tol, self.infeasibility_tol) <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise InvalidArgumentError("step_fraction must lie in (0, 1)")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")


@dataclass
class SdpSolution:
    y: np.ndarray
    objective: float
    status: str
    iterations: int
    achieved_gap: float
    dual_objective: float = float("nan")
    primal_infeasibility: float = float("nan")
    dual_infeasibility: float = float("nan")
    history: List[Tuple[float, float]] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# equality elimination and facial reduction
# ---------------------------------------------------------------------------

class InconsistentEqualitiesError(InvalidArgumentError):
    """The linear equalities admit no solution."""


def eliminate_equalities(equalities, num_moments: int, tol: float = 1e-12):
    """Sparse reduced row echelon form of the equality system.

    Pivots are taken on the highest moment index present in each row, so the
    free coordinates are the low-degree moments.

    Returns:
        (y_p, N) with ``E (y_p + N z) = e`` for every z; N is CSC of shape (d, r).
    """
    pivots: Dict[int, Tuple[Dict[int, float], float]] = {}
    for fn, rhs in equalities:
        row = {int(k): float(v) for k, v in fn.items() if v != 0.0}
        scale = max((abs(v) for v in row.values()), default=0.0)
        rhs = float(rhs)
        while row:
            lead = max(row)
            c = row[lead]
            if abs(c) <= tol * max(scale, 1.0):
                del row[lead]
                continue
            if lead in pivots:
                prow, prhs = pivots[lead]
                for k, v in prow.items():
                    nv = row.get(k, 0.0) - c * v
                    if k == lead or abs(nv) <= tol * max(scale, 1.0):
                        row.pop(k, None)
                    else:
                        row[k] = nv
                rhs -= c * prhs
                continue
            pivots[lead] = ({k: v / c for k, v in row.items()}, rhs / c)
            break
        else:
            if abs(rhs) > 1e-9 * max(scale, 1.0):
                raise InconsistentEqualitiesError("linear equalities are inconsistent")
    # back substitution, increasing pivot order
    for lead in sorted(pivots):
        prow, prhs = pivots[lead]
        for k in [k for k in prow if k != lead and k in pivots]:
            c = prow.pop(k)
            srow, srhs = pivots[k]
            for kk, v in srow.items():
                if kk == k:
                    continue
                prow[kk] = prow.get(kk, 0.0) - c * v
            prhs -= c * srhs
        pivots[lead] = ({k: v for k, v in prow.items() if v != 0.0}, prhs)
    free = [k for k in range(num_moments) if k not in pivots]
    col_of = {k: j for j, k in enumerate(free)}
    y_p = np.zeros(num_moments)
    rows, cols, vals = list(free), list(range(len(free))), [1.0] * len(free)
    for lead, (prow, prhs) in pivots.items():
        y_p[lead] = prhs
        for k, v in prow.items():
            if k != lead:
                rows.append(lead)
                cols.append(col_of[k])
                vals.append(-v)
    N = sp.csc_matrix((vals, (rows, cols)), shape=(num_moments, len(free)))
    return y_p, N


@dataclass
class _Block:
    n: int
    C: np.ndarray  # dense n x n
    G: sp.csc_matrix  # (n*n, r), row-major vec
    label: str
    keep: np.ndarray  # indices of the original block kept after facial reduction
    GT: sp.csr_matrix = None
    groups: list = None
    nzcols: np.ndarray = None

    def __post_init__(self):
        self.GT = self.G.T.tocsr()
        self.nzcols = np.flatnonzero(np.diff(self.G.indptr))
        # columns grouped by nonzero count, for batched Schur products
        G = self.G
        counts = np.diff(G.indptr)
        a_all, b_all = np.divmod(G.indices, self.n)
        self.groups = []
        for k in np.unique(counts[counts > 0]):
            cols = np.flatnonzero(counts == k)
            pos = G.indptr[cols][:, None] + np.arange(k)[None, :]
            self.groups.append((cols, a_all[pos], b_all[pos], G.data[pos]))


@dataclass
class ReducedProblem:
    """Inequality-form SDP in the reduced coordinates z."""

    y_p: np.ndarray
    N: sp.csc_matrix
    c: np.ndarray
    c0: float
    blocks: List[_Block]
    lp_h: np.ndarray
    lp_H: sp.csr_matrix

    @property
    def num_free(self) -> int:
        return self.N.shape[1]

    def lift(self, z) -> np.ndarray:
        return self.y_p + self.N @ z


def _facial_keep(C_vec: np.ndarray, G: sp.csc_matrix, n: int) -> np.ndarray:
    """Indices spanning the complement of the common kernel of C and every G_j."""
    W = sp.hstack([sp.csc_matrix(C_vec.reshape(-1, 1)), G]).tocoo()
    ncol = W.shape[1]
    a, l = np.divmod(W.row, n)
    D = sp.csr_matrix((W.data, (a, l * ncol + W.col)), shape=(n, n * ncol))
    H = (D @ D.T).toarray()
    w, V = np.linalg.eigh(H)
    top = max(w[-1], 1e-300)
    K = V[:, w <= 1e-12 * top]
    if K.shape[1] == 0:
        return np.arange(n)
    if K.shape[1] == n:
        return np.arange(0)
    _, _, piv = la.qr(K.T, pivoting=True)
    drop = set(piv[: K.shape[1]].tolist())
    return np.array([i for i in range(n) if i not in drop], dtype=np.int64)


def reduce_problem(prob: SdpProblem, facial_reduction: bool = True) -> ReducedProblem:
    """Eliminate equalities and restrict blocks to their minimal face."""
    if not prob.blocks:
        raise InvalidArgumentError("problem has no PSD block")
    y_p, N = eliminate_equalities(prob.equalities, prob.num_moments)
    cost = prob.cost_vector()
    c = N.T @ cost
    c0 = float(cost @ y_p)
    blocks: List[_Block] = []
    lp_h, lp_rows = [], []
    for blk in prob.blocks:
        Fhat = blk.coefficient_matrix(prob.num_moments)
        C_vec = Fhat @ y_p
        G = (Fhat @ N).tocsc()
        G.eliminate_zeros()
        n = blk.size
        if blk.diagonal:
            diag = np.arange(n) * (n + 1)
            lp_h.append(C_vec[diag])
            lp_rows.append(G[diag, :])
            continue
        keep = _facial_keep(C_vec, G, n) if facial_reduction else np.arange(n)
        if len(keep) == 0:
            continue
        if len(keep) < n:
            pos = -np.ones(n, dtype=np.int64)
            pos[keep] = np.arange(len(keep))
            k = len(keep)
            sel_rows = (pos[:, None] * k + pos[None, :]).ravel()
            ok = (pos[:, None] >= 0) & (pos[None, :] >= 0)
            src = np.flatnonzero(ok.ravel())
            P = sp.csr_matrix((np.ones(len(src)), (sel_rows[src], src)), shape=(k * k, n * n))
            G = (P @ G).tocsc()
            C_vec = P @ C_vec
            n = k
        blocks.append(_Block(n, C_vec.reshape(n, n), G, blk.label, keep))
    if lp_rows:
        lp_H = sp.vstack(lp_rows).tocsr()
        lp_h = np.concatenate(lp_h)
    else:
        lp_H = sp.csr_matrix((0, N.shape[1]))
        lp_h = np.zeros(0)
    return ReducedProblem(y_p, N, c, c0, blocks, lp_h, lp_H)


# ---------------------------------------------------------------------------
# interior-point method
# ---------------------------------------------------------------------------

def _sym(A):
    return 0.5 * (A + A.T)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD (X positive definite)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    T = la.solve_triangular(L, dX, lower=True)
    T = la.solve_triangular(L, T.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


@numba.njit(cache=True, nogil=True)
def _add_upper_rows(M, rows, T, indptr, indices, data):  # pragma: no cover - compiled
    # M[rows[i], j] += <G_j, T_i> for j >= rows[i]; G in CSC form
    r = len(indptr) - 1
    for i in range(T.shape[0]):
        row = rows[i]
        Mi = M[row]
        Ti = T[i]
        for j in range(row, r):
            acc = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                acc += data[k] * Ti[indices[k]]
            Mi[j] += acc


def _schur_block(blk: _Block, Y: np.ndarray, Sinv: np.ndarray, M: np.ndarray) -> None:
    """Add M_ij = tr(G_i Y G_j S^{-1}) to the upper triangle of M."""
    n, G = blk.n, blk.G
    if n <= _KRON_MAX:
        K = np.einsum("ad,bc->abcd", Sinv, Y).reshape(n * n, n * n)
        Gc = blk.GT[blk.nzcols]
        P = Gc @ K
        M[np.ix_(blk.nzcols, blk.nzcols)] += (Gc @ P.T).T
        return
    chunk = max(1, SCHUR_CHUNK // (n * n))
    for cols, A, B, V in blk.groups:
        for s in range(0, len(cols), chunk):
            e = s + chunk
            # row j of T is vec(Y G_j S^{-1}) = sum_e v_e Y[:, a_e] S^{-1}[b_e, :]
            W = (Y[:, A[s:e]] * V[s:e]).transpose(1, 0, 2)
            T = np.matmul(W, Sinv[B[s:e], :]).reshape(len(W), n * n)
            _add_upper_rows(M, cols[s:e], T, G.indptr, G.indices, G.data)


SCHUR_CHUNK = 10_000_000
REFINE_STEPS = 2
# wide central-path neighborhood: lambda_min(S^1/2 Y S^1/2) >= NEIGHBORHOOD * mu
NEIGHBORHOOD = 1e-3
NEIGHBORHOOD_TRIALS = 40
BACKTRACK = 0.8


class _Ipm:
    def __init__(self, rp: ReducedProblem, cfg: SolverConfig):
        self.rp, self.cfg = rp, cfg
        self.r = rp.num_free
        self.nu = sum(b.n for b in rp.blocks) + len(rp.lp_h)

    # operators ---------------------------------------------------------
    def Gop(self, z):
        return [(b.G @ z).reshape(b.n, b.n) for b in self.rp.blocks], self.rp.lp_H @ z

    def Aop(self, Ys, ylp):
        out = np.zeros(self.r)
        for b, Y in zip(self.rp.blocks, Ys):
            out += b.GT @ Y.ravel()
        if len(ylp):
            out += self.rp.lp_H.T @ ylp
        return out

    def _neighborhood(self, Ss, dSs, slp, dslp, Ys, dYs, ylp, dylp, ap, ad):
        """Shrink both steps until every block keeps lambda_min(S Y) >= gamma mu."""
        for _ in range(NEIGHBORHOOD_TRIALS):
            Sn = [S + ap * d for S, d in zip(Ss, dSs)]
            Yn = [Y + ad * d for Y, d in zip(Ys, dYs)]
            sn, yn = slp + ap * dslp, ylp + ad * dylp
            mu = (sum(float(np.sum(S * Y)) for S, Y in zip(Sn, Yn)) + float(sn @ yn)) / self.nu
            ok = mu > 0 and (not len(sn) or np.min(sn * yn) >= NEIGHBORHOOD * mu)
            for S, Y in zip(Sn, Yn):
                if not ok:
                    break
                try:
                    L = np.linalg.cholesky(S)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                ok = np.linalg.eigvalsh(L.T @ Y @ L)[0] >= NEIGHBORHOOD * mu
            if ok:
                break
            ap, ad = ap * BACKTRACK, ad * BACKTRACK
        return ap, ad

    def run(self) -> Tuple[np.ndarray, dict]:
        rp, cfg = self.rp, self.cfg
        blocks = rp.blocks
        c = rp.c
        normC = np.sqrt(sum(np.sum(b.C ** 2) for b in blocks) + np.sum(rp.lp_h ** 2))
        normc = np.linalg.norm(c)
        z = np.zeros(self.r)
        Ss, Ys = [], []
        for b in blocks:
            gnorm = np.sqrt(np.asarray(b.G.multiply(b.G).sum(axis=0)).ravel())
            sn = np.sqrt(b.n)
            xi = max(10.0, sn, sn * np.max((1 + np.abs(c)) / (1 + gnorm))) if self.r else 10.0
            eta = max(10.0, sn, np.linalg.norm(b.C), gnorm.max() if self.r else 0.0)
            Ys.append(xi * np.eye(b.n))
            Ss.append(eta * np.eye(b.n))
        p = len(rp.lp_h)
        slp = np.full(p, 10.0)
        ylp = np.full(p, 10.0)
        history = []
        status, msg = MAX_ITER, "iteration limit reached"
        it = 0
        info = {}
        for it in range(cfg.max_iterations + 1):
            GZ, gz = self.Gop(z)
            Rps = [b.C + g - S for b, g, S in zip(blocks, GZ, Ss)]
            rplp = rp.lp_h + gz - slp
            Rd = c - self.Aop(Ys, ylp)
            pobj = float(c @ z) + rp.c0
            dobj = -sum(float(np.sum(b.C * Y)) for b, Y in zip(blocks, Ys)) - float(rp.lp_h @ ylp) + rp.c0
            pinf = np.sqrt(sum(np.sum(R ** 2) for R in Rps) + np.sum(rplp ** 2)) / (1 + normC)
            dinf = np.linalg.norm(Rd) / (1 + normc)
            gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
            history.append((pobj, dobj))
            info = dict(pobj=pobj, dobj=dobj, pinf=pinf, dinf=dinf, gap=gap)
            log.debug("it %3d p %.10e d %.10e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, gap, pinf, dinf)
            if gap <= cfg.duality_gap_tol and pinf <= cfg.feasibility_tol and dinf <= cfg.feasibility_tol:
                status, msg = OPTIMAL, "converged"
                break
            # infeasibility certificates
            bY = dobj - rp.c0
            if bY > 0 and np.linalg.norm(c - Rd) / bY < cfg.infeasibility_tol:
                status, msg = INFEASIBLE, "primal infeasibility certificate"
                break
            cz = -(pobj - rp.c0)
            if cz > 0 and (normC + np.sqrt(sum(np.sum(R ** 2) for R in Rps))) / cz < cfg.infeasibility_tol:
                status, msg = INFEASIBLE, "dual infeasibility certificate (unbounded)"
                break
            if it == cfg.max_iterations:
                break
            mu = (sum(float(np.sum(S * Y)) for S, Y in zip(Ss, Ys)) + float(slp @ ylp)) / self.nu
            # Schur complement
            Sinvs = []
            try:
                for S in Ss:
                    cf = la.cho_factor(S, check_finite=False)
                    Sinvs.append(_sym(la.cho_solve(cf, np.eye(len(S)), check_finite=False)))
            except la.LinAlgError:
                status, msg = NUMERICAL_FAILURE, "slack matrix lost definiteness"
                break
            # only the upper triangle of M is formed and read
            M = np.zeros((self.r, self.r))
            for b, Y, Si in zip(blocks, Ys, Sinvs):
                _schur_block(b, Y, Si, M)
            if p:
                H = rp.lp_H
                M += (H.T @ sp.diags(ylp / slp) @ H).toarray()
            fac = None
            reg = 0.0
            diag = M.diagonal().copy()
            dmax = max(np.max(np.abs(diag)), 1e-300) if self.r else 1.0
            for attempt in range(6):
                try:
                    if self.r:
                        np.fill_diagonal(M, diag + reg)
                        fac = la.cho_factor(M, lower=False, overwrite_a=attempt == 5, check_finite=False)
                    break
                except la.LinAlgError:
                    reg = dmax * 10.0 ** (-14 + 2 * attempt)
            if fac is None and self.r:
                status, msg = NUMERICAL_FAILURE, "Schur complement not positive definite"
                break
            YRpS = [Y @ R @ Si for Y, R, Si in zip(Ys, Rps, Sinvs)]
            base = -c - self.Aop(YRpS, ylp * rplp / slp if p else ylp)
            ASinv = self.Aop(Sinvs, 1.0 / slp if p else slp)

            def _dy(sigma, corr, dz):
                gdz, hdz = self.Gop(dz)
                dSs = [R + g for R, g in zip(Rps, gdz)]
                dslp = rplp + hdz
                dYs = []
                for i, (Y, Si, dS) in enumerate(zip(Ys, Sinvs, dSs)):
                    K = Y @ dS
                    if corr is not None:
                        K = K + corr[2][i]
                    dYs.append(_sym(sigma * mu * Si - Y - K @ Si))
                dylp = sigma * mu / slp - ylp - ylp * dslp / slp if p else np.zeros(0)
                if corr is not None and p:
                    dylp = dylp - corr[3] / slp
                return dYs, dylp, dSs, dslp

            def direction(sigma, corr=None):
                rhs = base + sigma * mu * ASinv
                if corr is not None:
                    rhs = rhs - self.Aop(corr[0], corr[1])
                dz = la.cho_solve(fac, rhs, check_finite=False) if self.r else np.zeros(0)
                dYs, dylp, dSs, dslp = _dy(sigma, corr, dz)
                for _ in range(REFINE_STEPS if self.r else 0):
                    # the Newton system requires A(dY) = Rd
                    res = Rd - self.Aop(dYs, dylp)
                    if np.linalg.norm(res) <= 1e-15 * (1 + normc):
                        break
                    dz = dz - la.cho_solve(fac, res, check_finite=False)
                    dYs, dylp, dSs, dslp = _dy(sigma, corr, dz)
                return dz, dSs, dslp, dYs, dylp

            def steps(dSs, dslp, dYs, dylp):
                ap = min([_max_step(S, d) for S, d in zip(Ss, dSs)] + [_max_step_lp(slp, dslp)])
                ad = min([_max_step(Y, d) for Y, d in zip(Ys, dYs)] + [_max_step_lp(ylp, dylp)])
                return ap, ad

            dz, dSs, dslp, dYs, dylp = direction(0.0)
            ap, ad = steps(dSs, dslp, dYs, dylp)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = (
                sum(float(np.sum((S + ap * dS) * (Y + ad * dY))) for S, dS, Y, dY in zip(Ss, dSs, Ys, dYs))
                + float((slp + ap * dslp) @ (ylp + ad * dylp))
            ) / self.nu
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
            # Mehrotra corrector: second-order term dY_aff dS_aff S^{-1}
            corr_mats = [dY @ dS for dY, dS in zip(dYs, dSs)]
            corr_A = [K @ Si for K, Si in zip(corr_mats, Sinvs)]
            corr_lp = dylp * dslp
            dz, dSs, dslp, dYs, dylp = direction(sigma, (corr_A, corr_lp / slp if p else corr_lp, corr_mats, corr_lp))
            ap, ad = steps(dSs, dslp, dYs, dylp)
            ap = min(1.0, cfg.step_fraction * ap)
            ad = min(1.0, cfg.step_fraction * ad)
            ap, ad = self._neighborhood(Ss, dSs, slp, dslp, Ys, dYs, ylp, dylp, ap, ad)
            log.debug("    mu %.2e sigma %.2e ap %.2e ad %.2e reg %.1e", mu, sigma, ap, ad, reg)
            if log.isEnabledFor(logging.DEBUG - 1):
                for S, Y in zip(Ss, Ys):
                    es, ey = np.linalg.eigvalsh(S), np.linalg.eigvalsh(Y)
                    log.log(logging.DEBUG - 1, "      S [%.2e %.2e] Y [%.2e %.2e]", es[0], es[-1], ey[0], ey[-1])
            if ap < 1e-10 and ad < 1e-10:
                status, msg = NUMERICAL_FAILURE, "step length collapsed"
                break
            z = z + ap * dz
            Ss = [S + ap * d for S, d in zip(Ss, dSs)]
            slp = slp + ap * dslp
            Ys = [Y + ad * d for Y, d in zip(Ys, dYs)]
            ylp = ylp + ad * dylp
        info.update(status=status, message=msg, iterations=it, history=history)
        return z, info


def solve(prob: SdpProblem, cfg: SolverConfig | None = None) -> SdpSolution:
    """Solve a moment SDP.

    Args:
        prob: problem with at least one PSD block and the ``y_0 = 1`` row.
        cfg: solver settings; defaults to ``SolverConfig()``.

    Returns:
        SdpSolution whose ``y`` satisfies the equalities to rounding error.
    """
    cfg = cfg or SolverConfig()
    if not prob.blocks:
        raise InvalidArgumentError("problem has no PSD block")
    if not any(fn.get(0, 0.0) != 0.0 for fn, _ in prob.equalities):
        raise InvalidArgumentError("problem lacks the y_0 normalization")
    t0 = time.perf_counter()
    try:
        rp = reduce_problem(prob)
    except InconsistentEqualitiesError as exc:
        y = np.zeros(prob.num_moments)
        return SdpSolution(y, float("nan"), INFEASIBLE, 0, float("nan"), message=str(exc))
    z, info = _Ipm(rp, cfg).run()
    y = rp.lift(z)
    sol = SdpSolution(
        y=y,
        objective=prob.objective(y),
        status=info["status"],
        iterations=info["iterations"],
        achieved_gap=info.get("gap", float("nan")),
        dual_objective=info.get("dobj", float("nan")),
        primal_infeasibility=info.get("pinf", float("nan")),
        dual_infeasibility=info.get("dinf", float("nan")),
        history=info["history"],
        wall_time=time.perf_counter() - t0,
        message=info["message"],
    )
    return sol


def min_block_eigenvalues(prob: SdpProblem, y) -> List[float]:
    """Smallest eigenvalue of every block evaluated at y."""
    out = []
    for b in prob.blocks:
        M = b.evaluate(y)
        out.append(float(np.min(np.diag(M))) if b.diagonal else float(np.linalg.eigvalsh(M)[0]))
    return out


# ---------------------------------------------------------------------------
# SDPA sparse format
# ---------------------------------------------------------------------------

_TAG = "* herwc"


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(prob: SdpProblem, reduced: bool = False) -> str:
    """Write ``prob`` as an SDPA sparse document.

    The SDPA primal is ``minimize c.x s.t. sum_i F_i x_i - F_0 PSD``.

    With ``reduced=False`` the variables are the moments ``y_1 .. y_{d-1}``,
    ``y_0 = 1`` is substituted into ``F_0`` and the remaining equalities become
    a diagonal block of paired inequalities ``+-(E y - e) >= 0``. Comment lines
    record what is needed to rebuild the exact problem.

    With ``reduced=True`` equalities are eliminated and blocks are restricted to
    their minimal face first; the variables are the reduced coordinates. This is
    the form to hand to external solvers, since it admits strictly feasible points.
    """
    out = io.StringIO()
    w = out.write
    if reduced:
        rp = reduce_problem(prob)
        r = rp.num_free
        w(f"{_TAG} reduced\n")
        w(f"{_TAG} constant {_fmt(rp.c0)}\n")
        for k, b in enumerate(rp.blocks, 1):
            w(f"{_TAG} block {k} {b.label}\n")
        w(f"{r}\n{len(rp.blocks)}\n")
        w(" ".join(str(b.n) for b in rp.blocks) + "\n")
        w(" ".join(_fmt(v) for v in rp.c) + "\n")
        for k, b in enumerate(rp.blocks, 1):
            n = b.n
            for i in range(n):
                for j in range(i, n):
                    if b.C[i, j] != 0.0:
                        w(f"0 {k} {i + 1} {j + 1} {_fmt(-b.C[i, j])}\n")
            G = b.G.tocoo()
            a, l = np.divmod(G.row, n)
            up = a <= l
            order = np.lexsort((l[up], a[up], G.col[up]))
            for col, i, j, v in zip(G.col[up][order], a[up][order], l[up][order], G.data[up][order]):
                if v != 0.0:
                    w(f"{col + 1} {k} {i + 1} {j + 1} {_fmt(v)}\n")
        return out.getvalue()

    d = prob.num_moments
    eqs = list(prob.equalities)
    has_norm = bool(eqs) and eqs[0][0] == {0: 1.0} and eqs[0][1] == 1.0
    if has_norm:
        eqs = eqs[1:]
    w(f"{_TAG} moments {d}\n")
    w(f"{_TAG} constant {_fmt(prob.cost.get(0, 0.0))}\n")
    if prob.num_vars is not None:
        w(f"{_TAG} num_vars {prob.num_vars}\n")
    if prob.order is not None:
        w(f"{_TAG} order {prob.order}\n")
    for key, val in sorted(prob.labels.items()):
        w(f"{_TAG} label {key}={val}\n")
    if has_norm:
        w(f"{_TAG} normalization\n")
    for k, b in enumerate(prob.blocks, 1):
        w(f"{_TAG} block {k} {b.label}\n")
    nblocks = len(prob.blocks) + (1 if eqs else 0)
    if eqs:
        w(f"{_TAG} equalities {nblocks} {len(eqs)}\n")
        for t, (_, rhs) in enumerate(eqs):
            if rhs != 0.0:
                w(f"{_TAG} eqrhs {t} {_fmt(rhs)}\n")
    w(f"{d - 1}\n{nblocks}\n")
    sizes = [(-b.size if b.diagonal else b.size) for b in prob.blocks]
    if eqs:
        sizes.append(-2 * len(eqs))
    w(" ".join(str(s) for s in sizes) + "\n")
    cv = prob.cost_vector()
    w(" ".join(_fmt(v) for v in cv[1:]) + "\n")
    for k, b in enumerate(prob.blocks, 1):
        for i, j, mom, v in zip(b.rows, b.cols, b.moms, b.vals):
            if mom == 0:
                w(f"0 {k} {i + 1} {j + 1} {_fmt(-v)}\n")
            else:
                w(f"{mom} {k} {i + 1} {j + 1} {_fmt(v)}\n")
    if eqs:
        k = nblocks
        for t, (fn, rhs) in enumerate(eqs):
            const = fn.get(0, 0.0) - rhs
            for sign, pos in ((1.0, 2 * t + 1), (-1.0, 2 * t + 2)):
                if const != 0.0:
                    w(f"0 {k} {pos} {pos} {_fmt(-sign * const)}\n")
                for mom in sorted(fn):
                    if mom != 0 and fn[mom] != 0.0:
                        w(f"{mom} {k} {pos} {pos} {_fmt(sign * fn[mom])}\n")
    return out.getvalue()


def _tokens(line: str) -> List[str]:
    for ch in ",{}()":
        line = line.replace(ch, " ")
    return line.split()


def import_sdpa(doc: str) -> SdpProblem:
    """Parse an SDPA sparse document.

    Documents written by :func:`export_sdpa` are restored exactly. Any other
    conforming document is read as moments ``y_0 = 1, y_i = x_i``.

    Raises:
        ParseError: malformed header or entry, with the offending line number.
    """
    meta: Dict[str, object] = {"blocks": {}, "eqrhs": {}, "labels": {}}
    body: List[Tuple[int, List[str]]] = []
    for lineno, raw in enumerate(doc.splitlines(), 1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith(_TAG):
            parts = s[len(_TAG):].split()
            if not parts:
                continue
            key = parts[0]
            try:
                if key == "block":
                    meta["blocks"][int(parts[1])] = " ".join(parts[2:])
                elif key == "eqrhs":
                    meta["eqrhs"][int(parts[1])] = float(parts[2])
                elif key == "equalities":
                    meta["equalities"] = (int(parts[1]), int(parts[2]))
                elif key == "label":
                    k, _, v = " ".join(parts[1:]).partition("=")
                    meta["labels"][k] = v
                elif key in ("moments", "num_vars", "order"):
                    meta[key] = int(parts[1])
                elif key == "constant":
                    meta[key] = float(parts[1])
                elif key in ("normalization", "reduced"):
                    meta[key] = True
            except (IndexError, ValueError):
                raise ParseError(f"malformed metadata comment {s!r}", lineno) from None
            continue
        if s[0] in "*\"":
            continue
        body.append((lineno, _tokens(s)))
    if not body:
        raise ParseError("empty document: missing header", 1)

    pos = 0

    def header_ints(count, what):
        nonlocal pos
        vals: List[int] = []
        while len(vals) < count:
            if pos >= len(body):
                raise ParseError(f"unexpected end of document while reading {what}", body[-1][0])
            lineno, toks = body[pos]
            pos += 1
            for t, tok in enumerate(toks):
                try:
                    vals.append(int(float(tok)) if float(tok).is_integer() else int(tok))
                except ValueError:
                    if t:
                        break  # trailing comment such as "=mdim"
                    raise ParseError(f"expected integer for {what}, got {tok!r}", lineno) from None
        if len(vals) != count:
            raise ParseError(f"too many values for {what}", body[pos - 1][0])
        return vals

    try:
        first_line = body[0][0]
        m = header_ints(1, "number of constraints")[0]
        nb = header_ints(1, "number of blocks")[0]
    except ParseError as exc:
        raise ParseError(str(exc).split(": ", 1)[-1], exc.line) from None
    if m < 0 or nb < 1:
        raise ParseError("constraint count must be >= 0 and block count >= 1", first_line)
    sizes = header_ints(nb, "block sizes")
    if any(s == 0 for s in sizes):
        raise ParseError("block size 0", body[pos - 1][0])
    cvec: List[float] = []
    while len(cvec) < m:
        if pos >= len(body):
            raise ParseError("unexpected end of document in cost vector", body[-1][0])
        lineno, toks = body[pos]
        pos += 1
        for t, tok in enumerate(toks):
            try:
                cvec.append(float(tok))
            except ValueError:
                if t:
                    break
                raise ParseError(f"bad cost value {tok!r}", lineno) from None
    if len(cvec) != m:
        raise ParseError("too many cost values", body[pos - 1][0])
    entries: Dict[int, List[Tuple[int, int, int, float]]] = {k: [] for k in range(1, nb + 1)}
    for lineno, toks in body[pos:]:
        if len(toks) != 5:
            raise ParseError(f"expected 5 fields, got {len(toks)}", lineno)
        try:
            mat, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise ParseError("malformed entry", lineno) from None
        if not 0 <= mat <= m:
            raise ParseError(f"matrix number {mat} out of range", lineno)
        if not 1 <= blk <= nb:
            raise ParseError(f"block number {blk} out of range", lineno)
        n = abs(sizes[blk - 1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError(f"index ({i},{j}) outside block of size {n}", lineno)
        if i > j:
            i, j = j, i
        if sizes[blk - 1] < 0 and i != j:
            raise ParseError("off-diagonal entry in a diagonal block", lineno)
        entries[blk].append((i - 1, j - 1, mat, v))

    d = int(meta.get("moments", m + 1))
    if d != m + 1:
        raise ParseError(f"metadata moment count {d} disagrees with {m} constraints", first_line)
    cost = {k + 1: v for k, v in enumerate(cvec) if v != 0.0}
    const = float(meta.get("constant", 0.0))
    if const != 0.0:
        cost[0] = const
    eq_block, neq = meta.get("equalities", (None, 0))
    blocks: List[PsdBlock] = []
    equalities: List[Tuple[Dict[int, float], float]] = [({0: 1.0}, 1.0)]
    for k in range(1, nb + 1):
        ents = entries[k]
        if k == eq_block:
            if -sizes[k - 1] != 2 * neq:
                raise ParseError("equality block size disagrees with metadata", first_line)
            fns: List[Dict[int, float]] = [dict() for _ in range(neq)]
            for i, _, mat, v in ents:
                if i % 2:
                    continue
                fns[i // 2][mat] = fns[i // 2].get(mat, 0.0) + v
            for t, fn in enumerate(fns):
                rhs = meta["eqrhs"].get(t, 0.0)
                if 0 in fn:
                    fn[0] = -fn[0] + rhs
                equalities.append((fn, rhs))
            continue
        rows = [e[0] for e in ents]
        cols = [e[1] for e in ents]
        moms = [e[2] for e in ents]
        vals = [(-e[3] if e[2] == 0 else e[3]) for e in ents]
        label = meta["blocks"].get(k, f"block{k}")
        blocks.append(PsdBlock(abs(sizes[k - 1]), rows, cols, moms, vals, diagonal=sizes[k - 1] < 0, label=label))
    return SdpProblem(
        num_moments=d,
        cost=cost,
        blocks=blocks,
        equalities=equalities,
        num_vars=meta.get("num_vars"),
        order=meta.get("order"),
        labels=dict(meta["labels"]),
    )
