import numpy as np
import pytest

from herwc.calib import build_f2, scale_task
from herwc.errors import InvalidArgumentError, ParseError
from herwc.poly import variables
from herwc.relax import PolyProblem, PsdBlock, SdpProblem, assemble_relaxation
from herwc.sdp import (
    INFEASIBLE,
    OPTIMAL,
    SolverConfig,
    eliminate_equalities,
    export_sdpa,
    import_sdpa,
    min_block_eigenvalues,
    reduce_problem,
    solve,
)

from .conftest import make_truth


def toy():
    # min y1 s.t. [[1, y1], [y1, 1]] PSD
    blk = PsdBlock(2, [0, 0, 1], [0, 1, 1], [0, 1, 0], [1.0, 1.0, 1.0], label="moment")
    return SdpProblem(2, {1: 1.0}, [blk], [({0: 1.0}, 1.0)])


@pytest.fixture(scope="module")
def qhec_two_motions():
    from herwc.calib import CalibrationTask
    from herwc.geom import MotionPair

    X, _, pairs = make_truth(3, n_poses=2)
    motions = tuple(MotionPair(p.a, X.inverse() @ p.a @ X) for p in pairs)
    task = scale_task(CalibrationTask(motions=motions))
    return assemble_relaxation(build_f2(task), 2)


class TestSolve:
    def test_toy(self):
        sol = solve(toy())
        assert sol.status == OPTIMAL
        assert abs(sol.objective + 1) < 1e-8
        assert abs(sol.y[1] + 1) < 1e-8

    def test_interval(self):
        (x,) = variables(1)
        sol = solve(assemble_relaxation(PolyProblem(-x, inequalities=(1 - x * x,)), 1))
        assert abs(sol.objective + 1) < 1e-8

    def test_qhec_noiseless(self, qhec_two_motions):
        sol = solve(qhec_two_motions)
        assert sol.optimal
        assert abs(sol.objective) < 1e-7

    def test_optimal_invariants(self, qhec_two_motions):
        cfg = SolverConfig()
        prob = qhec_two_motions
        sol = solve(prob, cfg)
        assert sol.achieved_gap <= cfg.duality_gap_tol
        for b, lam in zip(prob.blocks, min_block_eigenvalues(prob, sol.y)):
            assert lam >= -cfg.feasibility_tol * (1 + np.trace(b.evaluate(sol.y)))
        E, e = prob.equality_matrix()
        assert np.abs(E @ sol.y - e).max() < 1e-9
        assert sol.objective == pytest.approx(prob.objective(sol.y), abs=1e-15)

    def test_weak_duality_every_iteration(self, qhec_two_motions):
        for prob in (toy(), qhec_two_motions):
            sol = solve(prob)
            for p, d in sol.history:
                assert d <= p + 1e-8

    def test_deterministic(self, qhec_two_motions):
        a, b = solve(qhec_two_motions), solve(qhec_two_motions)
        assert np.array_equal(a.y, b.y) and a.iterations == b.iterations

    def test_primal_infeasible(self):
        blk = PsdBlock(2, [0, 1, 1], [0, 1, 1], [1, 1, 0], [1.0, -1.0, -1.0])
        sol = solve(SdpProblem(2, {1: 1.0}, [blk], [({0: 1.0}, 1.0)]))
        assert sol.status == INFEASIBLE

    def test_unbounded(self):
        blk = PsdBlock(1, [0], [0], [1], [1.0], label="moment")
        sol = solve(SdpProblem(2, {1: -1.0}, [blk], [({0: 1.0}, 1.0)]))
        assert sol.status == INFEASIBLE

    def test_inconsistent_equalities(self):
        prob = toy()
        prob.equalities.append(({0: 1.0}, 2.0))
        assert solve(prob).status == INFEASIBLE

    def test_max_iter(self, qhec_two_motions):
        sol = solve(qhec_two_motions, SolverConfig(max_iterations=2))
        assert sol.status == "max_iter"

    def test_preconditions(self):
        with pytest.raises(InvalidArgumentError):
            solve(SdpProblem(1, {}, [], [({0: 1.0}, 1.0)]))
        with pytest.raises(InvalidArgumentError):
            solve(SdpProblem(2, {}, toy().blocks, []))

    @pytest.mark.parametrize("kw", [dict(duality_gap_tol=0), dict(step_fraction=1.0), dict(max_iterations=0)])
    def test_config_validation(self, kw):
        with pytest.raises(InvalidArgumentError):
            SolverConfig(**kw)


class TestReduction:
    def test_elimination(self, rng):
        eqs = [({0: 1.0}, 1.0), ({1: 1.0, 2: -2.0}, 0.5), ({3: 1.0, 1: 1.0}, 0.0)]
        y_p, N = eliminate_equalities(eqs, 5)
        for z in rng.normal(size=(5, N.shape[1])):
            y = y_p + N @ z
            assert abs(y[0] - 1) < 1e-14
            assert abs(y[1] - 2 * y[2] - 0.5) < 1e-12
            assert abs(y[3] + y[1]) < 1e-12
        assert N.shape[1] == 2

    def test_facial_reduction_shrinks_moment_block(self, qhec_two_motions):
        rp = reduce_problem(qhec_two_motions)
        # the unit-quaternion equality puts a structural kernel into the moment matrix
        assert rp.blocks[0].n < qhec_two_motions.moment_block().size


class TestSdpa:
    def test_toy_header(self):
        doc = export_sdpa(toy())
        body = [ln for ln in doc.splitlines() if not ln.startswith("*")]
        assert body[0] == "1" and body[1] == "1" and body[2] == "2"
        assert import_sdpa(doc).structurally_equal(toy())

    def test_entries_upper_triangle(self, qhec_two_motions):
        doc = export_sdpa(qhec_two_motions)
        body = [ln.split() for ln in doc.splitlines() if not ln.startswith("*")][4:]
        assert all(int(i) <= int(j) for _, _, i, j, _ in body)

    def test_round_trip_qhec(self, qhec_two_motions):
        back = import_sdpa(export_sdpa(qhec_two_motions))
        assert back.structurally_equal(qhec_two_motions)
        assert back.num_vars == qhec_two_motions.num_vars and back.order == 2

    def test_round_trip_bit_exact(self, rng):
        vals = rng.normal(size=3) * 10.0 ** rng.integers(-300, 300, size=3)
        blk = PsdBlock(2, [0, 0, 1], [0, 1, 1], [1, 2, 3], vals)
        prob = SdpProblem(4, {1: float(vals[0]), 3: 1 / 3}, [blk], [({0: 1.0}, 1.0), ({2: 0.1, 0: 0.7}, 0.3)])
        back = import_sdpa(export_sdpa(prob))
        assert back.structurally_equal(prob)

    def test_foreign_document(self):
        doc = '"a comment\n2 =mdim\n1 =nblocks\n{2}\n{1.0, 0.0}\n0 1 1 1 -1\n0 1 2 2 -1\n1 1 1 2 1\n2 1 2 2 0.5\n'
        prob = import_sdpa(doc)
        assert prob.num_moments == 3
        y = np.array([1.0, 0.2, 0.4])
        np.testing.assert_allclose(prob.blocks[0].evaluate(y), [[1.0, 0.2], [0.2, 1.2]])

    @pytest.mark.parametrize("doc,line", [("", 1), ("x\n", 1), ("1\n1\n2\n1.0\n1 1 1\n", 5), ("1\n1\n2\n1.0\n1 1 3 3 1.0\n", 5)])
    def test_parse_errors(self, doc, line):
        with pytest.raises(ParseError) as exc:
            import_sdpa(doc)
        assert exc.value.line == line

    def test_reduced_export_cross_solver(self, qhec_two_motions):
        pytest.importorskip("cvxopt")
        from .sdpa_reference import cvxopt_solve

        ref = solve(qhec_two_motions).objective
        status, obj = cvxopt_solve(export_sdpa(qhec_two_motions, reduced=True))
        assert status == "optimal"
        assert abs(obj - ref) <= 1e-6
