"""Order-delta moment (Lasserre) relaxations of polynomial problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, RelaxationOrderTooLowError
from .poly import MomentIndexer, Polynomial, basis_vector, riesz_linearize


@dataclass(frozen=True)
class PolyProblem:
    """minimize objective(x) s.t. g(x) >= 0 for g in inequalities, h(x) = 0 for h in equalities."""

    objective: Polynomial
    inequalities: Tuple[Polynomial, ...] = ()
    equalities: Tuple[Polynomial, ...] = ()
    var_names: Tuple[str, ...] | None = None

    def __post_init__(self):
        m = self.objective.num_vars
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for p in self.inequalities + self.equalities:
            if p.num_vars != m:
                raise InvalidArgumentError("all polynomials must share the variable count")
        if self.var_names is not None and len(self.var_names) != m:
            raise InvalidArgumentError("var_names length must equal the variable count")

    @property
    def num_vars(self) -> int:
        return self.objective.num_vars

    def max_degree(self) -> int:
        return max(p.degree() for p in (self.objective,) + self.inequalities + self.equalities)

    def min_order(self) -> int:
        return max(1, -(-self.max_degree() // 2))

    def is_feasible(self, x, tol: float = 1e-6) -> bool:
        return all(g(x) >= -tol for g in self.inequalities) and all(
            abs(h(x)) <= tol for h in self.equalities
        )


class PsdBlock:
    """Symmetric matrix that is affine-linear in the moment vector.

    Entry ``(i, j)`` equals the sum of ``val * y[mom]`` over stored triplets
    with that position. Only the upper triangle (``i <= j``) is stored.
    A diagonal block only has ``i == j`` entries and is treated as a set of
    scalar inequalities.
    """

    __slots__ = ("size", "rows", "cols", "moms", "vals", "diagonal", "label")

    def __init__(self, size, rows, cols, moms, vals, diagonal=False, label=""):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        moms = np.asarray(moms, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not (rows.shape == cols.shape == moms.shape == vals.shape):
            raise InvalidArgumentError("entry arrays must have equal length")
        if len(rows) and (rows.min() < 0 or cols.max() >= size or np.any(rows > cols)):
            raise InvalidArgumentError("entries must lie in the upper triangle of the block")
        if diagonal and np.any(rows != cols):
            raise InvalidArgumentError("diagonal block with off-diagonal entries")
        order = np.lexsort((moms, cols, rows))
        self.size = int(size)
        self.rows, self.cols, self.moms, self.vals = rows[order], cols[order], moms[order], vals[order]
        self.diagonal = bool(diagonal)
        self.label = label

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def evaluate(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        M = np.zeros((self.size, self.size))
        np.add.at(M, (self.rows, self.cols), self.vals * y[self.moms])
        off = self.rows != self.cols
        M[self.cols[off], self.rows[off]] = M[self.rows[off], self.cols[off]]
        return M

    def coefficient_matrix(self, num_moments: int) -> sp.csc_matrix:
        """Sparse (size*size, num_moments) map y -> row-major vec(block(y)), both triangles."""
        n = self.size
        off = self.rows != self.cols
        r = np.concatenate((self.rows * n + self.cols, (self.cols * n + self.rows)[off]))
        c = np.concatenate((self.moms, self.moms[off]))
        v = np.concatenate((self.vals, self.vals[off]))
        return sp.csc_matrix((v, (r, c)), shape=(n * n, num_moments))

    def moments_used(self) -> np.ndarray:
        return np.unique(self.moms)

    def same_structure(self, other: "PsdBlock") -> bool:
        return (
            self.size == other.size
            and self.diagonal == other.diagonal
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.moms, other.moms)
            and np.array_equal(self.vals, other.vals)
        )

    def __repr__(self):
        kind = "diag" if self.diagonal else "psd"
        return f"PsdBlock({kind}, size={self.size}, nnz={self.nnz}, label={self.label!r})"


@dataclass
class SdpProblem:
    """minimize cost . y s.t. every block(y) is PSD and every equality holds.

    ``equalities`` holds ``(functional, rhs)`` pairs where a functional is a
    ``{moment index: weight}`` dict; the normalization ``y_0 = 1`` is one of them.
    """

    num_moments: int
    cost: Dict[int, float]
    blocks: List[PsdBlock]
    equalities: List[Tuple[Dict[int, float], float]]
    num_vars: int | None = None
    order: int | None = None
    labels: Dict[str, str] = field(default_factory=dict)

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.num_moments)
        for k, v in self.cost.items():
            c[k] += v
        return c

    def equality_matrix(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        for r, (fn, _) in enumerate(self.equalities):
            for k, v in fn.items():
                rows.append(r)
                cols.append(k)
                vals.append(v)
        E = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.equalities), self.num_moments))
        return E, np.array([rhs for _, rhs in self.equalities], dtype=float)

    def objective(self, y) -> float:
        return float(self.cost_vector() @ np.asarray(y, dtype=float))

    def moment_block(self) -> PsdBlock:
        blocks = [b for b in self.blocks if b.label == "moment"]
        if len(blocks) != 1:
            raise InvalidArgumentError("problem has no unique moment-matrix block")
        return blocks[0]

    def structurally_equal(self, other: "SdpProblem") -> bool:
        def canon_fn(fn):
            return sorted((int(k), float(v)) for k, v in fn.items() if v != 0.0)

        return (
            self.num_moments == other.num_moments
            and canon_fn(self.cost) == canon_fn(other.cost)
            and len(self.blocks) == len(other.blocks)
            and all(a.same_structure(b) and a.label == b.label for a, b in zip(self.blocks, other.blocks))
            and [(canon_fn(f), float(r)) for f, r in self.equalities]
            == [(canon_fn(f), float(r)) for f, r in other.equalities]
        )


def _check_order(m_idx: MomentIndexer, delta: int):
    if m_idx.max_degree < 2 * delta:
        raise RelaxationOrderTooLowError(
            f"indexer covers degree {m_idx.max_degree}, need {2 * delta}"
        )


def build_moment_matrix(m: int, delta: int, idx: MomentIndexer) -> PsdBlock:
    """Moment matrix L_y(v_delta v_delta^T)."""
    _check_order(idx, delta)
    basis = basis_vector(m, delta).monomials
    n = len(basis)
    rows, cols, moms = [], [], []
    for i in range(n):
        bi = basis[i]
        for j in range(i, n):
            rows.append(i)
            cols.append(j)
            moms.append(idx.index(tuple(a + b for a, b in zip(bi, basis[j]))))
    return PsdBlock(n, rows, cols, moms, np.ones(len(rows)), label="moment")


def build_localizing_matrix(p: Polynomial, delta: int, idx: MomentIndexer, label: str = "localizing") -> PsdBlock:
    """Localizing matrix L_y(p v_{delta-1} v_{delta-1}^T)."""
    _check_order(idx, delta)
    if p.degree() + 2 * (delta - 1) > 2 * delta:
        raise RelaxationOrderTooLowError(
            f"constraint of degree {p.degree()} does not fit relaxation order {delta}"
        )
    basis = basis_vector(p.num_vars, delta - 1).monomials
    n = len(basis)
    terms = list(p.items())
    rows, cols, moms, vals = [], [], [], []
    for i in range(n):
        for j in range(i, n):
            s = tuple(a + b for a, b in zip(basis[i], basis[j]))
            acc: Dict[int, float] = {}
            for k, c in terms:
                mom = idx.index(tuple(a + b for a, b in zip(s, k)))
                acc[mom] = acc.get(mom, 0.0) + c
            for mom, c in acc.items():
                if c != 0.0:
                    rows.append(i)
                    cols.append(j)
                    moms.append(mom)
                    vals.append(c)
    return PsdBlock(n, rows, cols, moms, vals, label=label)


def equality_functionals(h: Polynomial, delta: int, idx: MomentIndexer) -> List[Dict[int, float]]:
    """L_y(h * w) for every monomial w with deg(h * w) <= 2 delta."""
    dh = h.degree()
    if dh > 2 * delta:
        raise RelaxationOrderTooLowError(f"equality of degree {dh} exceeds 2*delta = {2 * delta}")
    out = []
    for w in basis_vector(h.num_vars, 2 * delta - dh).monomials:
        shifted = Polynomial._raw(h.num_vars, {tuple(a + b for a, b in zip(k, w)): c for k, c in h.items()})
        out.append(riesz_linearize(shifted, idx))
    return out


def assemble_relaxation(prob: PolyProblem, delta: int = 2) -> SdpProblem:
    """Build the order-delta moment relaxation of ``prob`` as an SdpProblem."""
    m = prob.num_vars
    if delta < 1:
        raise InvalidArgumentError("relaxation order must be >= 1")
    if prob.objective.degree() > 2 * delta:
        raise RelaxationOrderTooLowError(
            f"objective degree {prob.objective.degree()} needs order >= {prob.min_order()}"
        )
    idx = MomentIndexer.build(m, 2 * delta)
    cost = riesz_linearize(prob.objective, idx)
    blocks = [build_moment_matrix(m, delta, idx)]
    for i, g in enumerate(prob.inequalities):
        blocks.append(build_localizing_matrix(g, delta, idx, label=f"localizing[{i}]"))
    equalities: List[Tuple[Dict[int, float], float]] = [({0: 1.0}, 1.0)]
    for h in prob.equalities:
        equalities.extend((fn, 0.0) for fn in equality_functionals(h, delta, idx))
    labels = {}
    if prob.var_names:
        labels["variables"] = ",".join(prob.var_names)
    return SdpProblem(idx.size, cost, blocks, equalities, num_vars=m, order=delta, labels=labels)


def moment_count(m: int, delta: int) -> int:
    return comb(m + 2 * delta, m)
