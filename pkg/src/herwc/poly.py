"""Sparse multivariate polynomials, monomial bases and the Riesz functional.

Monomials are exponent tuples ``(k1, ..., km)``. All orderings in this module
are graded lexicographic: by total degree first, then lexicographically
descending within a degree, so that for two variables the degree-2 block is
``x1^2, x1*x2, x2^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from numbers import Real
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError, RelaxationOrderTooLowError

MultiIndex = Tuple[int, ...]

PRUNE_TOL = 1e-14


def _add_idx(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(i + j for i, j in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial in ``num_vars`` real variables.

    Coefficients with magnitude below ``PRUNE_TOL`` are dropped on
    construction, so ``len(p.terms)`` is the structural monomial count.
    """

    __slots__ = ("num_vars", "_terms")

    def __init__(self, num_vars: int, terms: Mapping[MultiIndex, float] | None = None):
        if num_vars < 0:
            raise InvalidArgumentError("num_vars must be nonnegative")
        self.num_vars = int(num_vars)
        clean: Dict[MultiIndex, float] = {}
        for k, c in (terms or {}).items():
            k = tuple(int(e) for e in k)
            if len(k) != self.num_vars or any(e < 0 for e in k):
                raise InvalidArgumentError(f"bad multi-index {k} for {num_vars} variables")
            if abs(c) >= PRUNE_TOL:
                clean[k] = clean.get(k, 0.0) + float(c)
        self._terms = {k: c for k, c in clean.items() if abs(c) >= PRUNE_TOL}

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, num_vars: int) -> "Polynomial":
        return cls(num_vars, {(0,) * num_vars: value})

    @classmethod
    def variable(cls, i: int, num_vars: int) -> "Polynomial":
        if not 0 <= i < num_vars:
            raise InvalidArgumentError(f"variable index {i} out of range")
        k = [0] * num_vars
        k[i] = 1
        return cls(num_vars, {tuple(k): 1.0})

    @classmethod
    def _raw(cls, num_vars: int, terms: Dict[MultiIndex, float]) -> "Polynomial":
        # trusted fast path: keys already validated
        p = object.__new__(cls)
        p.num_vars = num_vars
        p._terms = {k: c for k, c in terms.items() if abs(c) >= PRUNE_TOL}
        return p

    # -- accessors --------------------------------------------------------
    @property
    def terms(self) -> Dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, k: Sequence[int]) -> float:
        return self._terms.get(tuple(k), 0.0)

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        if not self._terms:
            return -1
        return max(sum(k) for k in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.num_vars != self.num_vars:
                raise InvalidArgumentError(
                    f"variable count mismatch: {self.num_vars} vs {other.num_vars}"
                )
            return other
        if isinstance(other, Real):
            return Polynomial.constant(float(other), self.num_vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial._raw(self.num_vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.num_vars, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[MultiIndex, float] = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                k = _add_idx(k1, k2)
                out[k] = out.get(k, 0.0) + c1 * c2
        return Polynomial._raw(self.num_vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise InvalidArgumentError("only nonnegative integer powers")
        out = Polynomial.constant(1.0, self.num_vars)
        for _ in range(n):
            out = out * self
        return out

    def scale(self, s: float) -> "Polynomial":
        return Polynomial._raw(self.num_vars, {k: s * c for k, c in self._terms.items()})

    def substitute_signs(self, signs: Sequence[float]) -> "Polynomial":
        """Return p(s1*x1, ..., sm*xm) for signs s_i in {+1, -1}."""
        out = {}
        for k, c in self._terms.items():
            f = 1.0
            for e, s in zip(k, signs):
                if e % 2 and s < 0:
                    f = -f
            out[k] = c * f
        return Polynomial._raw(self.num_vars, out)

    def diff(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable ``i``."""
        if not 0 <= i < self.num_vars:
            raise InvalidArgumentError(f"variable index {i} out of range")
        out: Dict[MultiIndex, float] = {}
        for k, c in self._terms.items():
            if k[i]:
                kk = k[:i] + (k[i] - 1,) + k[i + 1 :]
                out[kk] = out.get(kk, 0.0) + c * k[i]
        return Polynomial._raw(self.num_vars, out)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            raise InvalidArgumentError(f"expected {self.num_vars} values, got shape {x.shape}")
        total = 0.0
        for k, c in self._terms.items():
            total += c * float(np.prod(x ** np.asarray(k)))
        return total

    __call__ = evaluate

    def equals(self, other: "Polynomial", tol: float = 0.0) -> bool:
        diff = self - other
        return all(abs(c) <= tol for c in diff._terms.values())

    def __repr__(self) -> str:
        if not self._terms:
            return f"Polynomial({self.num_vars}, 0)"
        parts = []
        for k in sorted(self._terms, key=grlex_key):
            mono = "*".join(
                f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(k) if e
            )
            parts.append(f"{self._terms[k]:+.6g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial({self.num_vars}, {' '.join(parts)})"


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    return a + b


def poly_mul(a: Polynomial, b: Polynomial | float) -> Polynomial:
    return a * b


def poly_scale(a: Polynomial, s: float) -> Polynomial:
    return a.scale(s)


def monomial_count(p: Polynomial) -> int:
    return len(p)


def variables(num_vars: int) -> List[Polynomial]:
    """All coordinate polynomials x1, ..., xm."""
    return [Polynomial.variable(i, num_vars) for i in range(num_vars)]


# -- monomial orderings ---------------------------------------------------

def grlex_key(k: Sequence[int]):
    return (sum(k), tuple(-e for e in k))


def _monomials_of_degree(m: int, deg: int) -> Iterator[MultiIndex]:
    if m == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _monomials_of_degree(m - 1, deg - first):
            yield (first,) + rest


def monomials_upto(m: int, deg: int) -> List[MultiIndex]:
    """All monomials in m variables of degree <= deg, graded-lex ordered."""
    if m < 1 or deg < 0:
        raise InvalidArgumentError("need m >= 1 and deg >= 0")
    out: List[MultiIndex] = []
    for d in range(deg + 1):
        out.extend(_monomials_of_degree(m, d))
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """The vector v_delta(x) of all monomials up to ``max_degree``."""

    num_vars: int
    max_degree: int
    monomials: Tuple[MultiIndex, ...]

    def __len__(self) -> int:
        return len(self.monomials)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.monomials[i]

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        exps = np.asarray(self.monomials, dtype=float)
        return np.prod(x[None, :] ** exps, axis=1)


def basis_vector(m: int, delta: int) -> MonomialBasis:
    return MonomialBasis(m, delta, tuple(monomials_upto(m, delta)))


@dataclass(frozen=True)
class MomentIndexer:
    """Bijection between monomials of degree <= max_degree and moment positions."""

    num_vars: int
    max_degree: int
    monomials: Tuple[MultiIndex, ...] = field(repr=False)
    _pos: Dict[MultiIndex, int] = field(repr=False, compare=False)

    @classmethod
    def build(cls, num_vars: int, max_degree: int) -> "MomentIndexer":
        monos = tuple(monomials_upto(num_vars, max_degree))
        return cls(num_vars, max_degree, monos, {k: i for i, k in enumerate(monos)})

    @property
    def size(self) -> int:
        return len(self.monomials)

    def __len__(self) -> int:
        return len(self.monomials)

    def index(self, k: Sequence[int]) -> int:
        try:
            return self._pos[tuple(k)]
        except KeyError:
            if len(k) != self.num_vars:
                raise InvalidArgumentError(f"multi-index {tuple(k)} has wrong length") from None
            raise RelaxationOrderTooLowError(
                f"monomial of degree {sum(k)} exceeds moment degree {self.max_degree}"
            ) from None

    def multi_index(self, i: int) -> MultiIndex:
        return self.monomials[i]

    def dirac(self, x) -> np.ndarray:
        """Moment vector of the point mass at x."""
        x = np.asarray(x, dtype=float)
        exps = np.asarray(self.monomials, dtype=float)
        return np.prod(x[None, :] ** exps, axis=1)


def moment_count(m: int, delta: int) -> int:
    """Number of moments d = C(m + 2*delta, m) of an order-delta relaxation."""
    return comb(m + 2 * delta, m)


def riesz_linearize(p: Polynomial, idx: MomentIndexer) -> Dict[int, float]:
    """Replace every monomial of p by its moment variable.

    Returns a sparse functional ``{moment position: weight}``.
    """
    if p.num_vars != idx.num_vars:
        raise InvalidArgumentError("polynomial and indexer disagree on variable count")
    if p.degree() > idx.max_degree:
        raise RelaxationOrderTooLowError(
            f"degree {p.degree()} exceeds moment degree {idx.max_degree}"
        )
    out: Dict[int, float] = {}
    for k, c in p.items():
        j = idx.index(k)
        out[j] = out.get(j, 0.0) + c
    return out
