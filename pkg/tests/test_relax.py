import numpy as np
import pytest

from herwc.errors import RelaxationOrderTooLowError
from herwc.poly import MomentIndexer, Polynomial, basis_vector, variables
from herwc.relax import (
    PolyProblem,
    assemble_relaxation,
    build_localizing_matrix,
    build_moment_matrix,
    equality_functionals,
    moment_count,
)
from herwc.sdp import solve


def test_moment_matrix_1d():
    idx = MomentIndexer.build(1, 2)
    M = build_moment_matrix(1, 1, idx).evaluate([10.0, 11.0, 12.0])
    np.testing.assert_array_equal(M, [[10.0, 11.0], [11.0, 12.0]])


def test_moment_matrix_qhec_size():
    idx = MomentIndexer.build(7, 4)
    blk = build_moment_matrix(7, 2, idx)
    assert blk.size == 36
    assert len(blk.moments_used()) == 330


@pytest.mark.parametrize("m,delta", [(2, 1), (3, 2), (5, 2)])
def test_moment_matrix_symmetry(m, delta, rng):
    idx = MomentIndexer.build(m, 2 * delta)
    M = build_moment_matrix(m, delta, idx).evaluate(rng.normal(size=idx.size))
    assert np.array_equal(M, M.T)
    assert M.shape[0] == len(basis_vector(m, delta))


def test_moment_matrix_entries(rng):
    idx = MomentIndexer.build(3, 4)
    y = rng.normal(size=idx.size)
    M = build_moment_matrix(3, 2, idx).evaluate(y)
    basis = basis_vector(3, 2).monomials
    for i in range(len(basis)):
        for j in range(len(basis)):
            k = tuple(a + b for a, b in zip(basis[i], basis[j]))
            assert M[i, j] == y[idx.index(k)]
    assert M[0, 0] == y[0]


def test_localizing_constant_is_lower_moment_matrix(rng):
    idx = MomentIndexer.build(3, 4)
    y = rng.normal(size=idx.size)
    L = build_localizing_matrix(Polynomial.constant(1.0, 3), 2, idx).evaluate(y)
    M = build_moment_matrix(3, 1, idx).evaluate(y)
    np.testing.assert_array_equal(L, M)


def test_localizing_1d():
    idx = MomentIndexer.build(1, 2)
    (x,) = variables(1)
    L = build_localizing_matrix(1 - x * x, 1, idx).evaluate([1.0, 0.5, 0.25])
    np.testing.assert_allclose(L, [[0.75]])


def test_localizing_dirac_oracle(rng):
    idx = MomentIndexer.build(4, 4)
    monos = [k for k in idx.monomials if sum(k) <= 2]
    p = Polynomial(4, {k: rng.normal() for k in monos})
    x0 = rng.normal(size=4)
    L = build_localizing_matrix(p, 2, idx).evaluate(idx.dirac(x0))
    v = basis_vector(4, 1).evaluate(x0)
    assert np.abs(L - p(x0) * np.outer(v, v)).max() < 1e-12 * (1 + np.abs(L).max())


def test_localizing_degree_overflow():
    idx = MomentIndexer.build(2, 4)
    x, _ = variables(2)
    with pytest.raises(RelaxationOrderTooLowError):
        build_localizing_matrix(x ** 3, 2, idx)


def test_assemble_order_too_low():
    x, y = variables(2)
    with pytest.raises(RelaxationOrderTooLowError):
        assemble_relaxation(PolyProblem(x ** 4 + y), 1)


def test_assemble_structure():
    x, y = variables(2)
    prob = PolyProblem(x ** 4 + y ** 2, inequalities=(1 - x * x,), equalities=(x + y - 1,))
    sdp = assemble_relaxation(prob, 2)
    assert sdp.num_moments == moment_count(2, 2) == 15
    assert [b.label for b in sdp.blocks].count("moment") == 1
    assert sdp.moment_block().size == 6
    assert sdp.equalities[0] == ({0: 1.0}, 1.0)
    # x + y - 1 times every monomial of degree <= 3
    assert len(sdp.equalities) == 1 + 10


def test_min_x_squared():
    (x,) = variables(1)
    sol = solve(assemble_relaxation(PolyProblem(x * x), 1))
    assert sol.optimal
    assert abs(sol.objective) < 1e-8
    np.testing.assert_allclose(sol.y, [1.0, 0.0, 0.0], atol=1e-6)


def test_min_minus_x_on_interval():
    (x,) = variables(1)
    sol = solve(assemble_relaxation(PolyProblem(-x, inequalities=(1 - x * x,)), 1))
    assert sol.optimal
    assert abs(sol.objective + 1) < 1e-8
    assert abs(sol.y[1] - 1) < 1e-6


def _random_problem(rng):
    x, y, z = variables(3)
    obj = Polynomial.constant(0.0, 3)
    for k in MomentIndexer.build(3, 4).monomials:
        obj = obj + Polynomial(3, {k: 0.3 * rng.normal()})
    obj = obj + 2 * (x ** 4 + y ** 4 + z ** 4)
    return PolyProblem(obj, inequalities=(1 - x * x - y * y - z * z,), equalities=(x - y * z,))


def test_lower_bound_property(rng):
    prob = _random_problem(rng)
    bound = solve(assemble_relaxation(prob, 2)).objective
    # feasible samples: pick y, z in the ball and set x = y z
    for _ in range(200):
        y, z = rng.uniform(-0.7, 0.7, size=2)
        p = np.array([y * z, y, z])
        if prob.is_feasible(p, 0.0):
            assert prob.objective(p) - bound >= -1e-8


def test_dirac_is_feasible(rng):
    prob = _random_problem(rng)
    sdp = assemble_relaxation(prob, 2)
    idx = MomentIndexer.build(3, 4)
    y, z = 0.3, -0.5
    p = np.array([y * z, y, z])
    ym = idx.dirac(p)
    for b in sdp.blocks:
        assert np.linalg.eigvalsh(b.evaluate(ym))[0] >= -1e-12
    for fn, rhs in sdp.equalities:
        assert abs(sum(v * ym[k] for k, v in fn.items()) - rhs) < 1e-10
    assert abs(sdp.objective(ym) - prob.objective(p)) < 1e-12


def test_order_monotonicity(rng):
    x, y = variables(2)
    for _ in range(3):
        c = rng.normal(size=5)
        obj = c[0] * x + c[1] * y + c[2] * x * y + c[3] * x * x + c[4] * y * y
        prob = PolyProblem(obj, inequalities=(1 - x * x, 1 - y * y))
        b1 = solve(assemble_relaxation(prob, 1)).objective
        b2 = solve(assemble_relaxation(prob, 2)).objective
        assert b2 >= b1 - 1e-8


def test_equality_functionals_annihilate(rng):
    idx = MomentIndexer.build(3, 4)
    x, y, z = variables(3)
    h = x * x + y * y + z * z - 1
    p = rng.normal(size=3)
    p /= np.linalg.norm(p)
    ym = idx.dirac(p)
    for fn in equality_functionals(h, 2, idx):
        assert abs(sum(v * ym[k] for k, v in fn.items())) < 1e-10
