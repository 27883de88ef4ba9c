"""
Tests for the conic interior-point solver
"""
import math

import numpy as np
import pytest

import sys
sys.path.insert(0, '.')

from src.core.constants import PSD_MEMBERSHIP_TOL
from src.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    InfeasibleError,
    UnboundedError,
)
from src.optimization import (
    ConeProgram,
    ConeSolution,
    ConeStatus,
    NonNegCone,
    PsdCone,
    SolverSettings,
    ZeroCone,
    cone_violation,
    membership_violation,
    smat,
    solve,
    solve_lp,
    solve_qp,
    svec,
    svec_dim,
    svec_index,
)
from tests.oracles import lp_oracle, random_bounded_polytope


class TestSymmetricPacking:
    """Test suite for svec/smat."""

    def test_inner_product_preserved(self):
        """Test svec(A).svec(B) equals trace(AB)."""
        rng = np.random.default_rng(0)
        for order in (1, 2, 3, 5):
            A = rng.normal(size=(order, order))
            B = rng.normal(size=(order, order))
            A, B = A + A.T, B + B.T
            assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B), abs=1e-12)

    def test_smat_inverts_svec(self):
        """Test unpacking recovers the matrix."""
        M = np.array([[2.0, -1.0, 0.5], [-1.0, 3.0, 0.25], [0.5, 0.25, 1.0]])
        np.testing.assert_allclose(smat(svec(M)), M, atol=1e-15)

    def test_index_layout(self):
        """Test svec_index points at the packed entry."""
        order = 4
        M = np.arange(16, dtype=float).reshape(4, 4)
        M = M + M.T
        v = svec(M)
        assert v.size == svec_dim(order)
        for i in range(order):
            for j in range(i + 1):
                scale = 1.0 if i == j else math.sqrt(2.0)
                assert v[svec_index(i, j, order)] == pytest.approx(scale * M[i, j])
                assert svec_index(i, j, order) == svec_index(j, i, order)


class TestConeProgram:
    """Test suite for program validation and serialization."""

    def test_cone_dimension_mismatch(self):
        """Test cone sizes must cover the rows of A."""
        with pytest.raises(DimensionMismatchError):
            ConeProgram(P=None, q=[1.0], A=[[1.0], [2.0]], b=[0.0, 0.0], cones=(NonNegCone(1),))

    def test_indefinite_cost_rejected(self):
        """Test P must be positive semidefinite."""
        with pytest.raises(ConfigError):
            ConeProgram(P=[[-1.0]], q=[0.0], A=[[1.0]], b=[1.0], cones=(NonNegCone(1),))

    def test_non_finite_rejected(self):
        """Test non-finite data is rejected."""
        with pytest.raises(ConfigError):
            ConeProgram(P=None, q=[np.inf], A=[[1.0]], b=[1.0], cones=(NonNegCone(1),))

    def test_dict_round_trip(self):
        """Test serialization reproduces the program bit for bit."""
        prog = ConeProgram(
            P=np.diag([0.1, 0.0, 0.3, 0.0]),
            q=[1.0 / 3.0, -2.0, 0.0, 1e-17],
            A=np.random.default_rng(1).normal(size=(5, 4)),
            b=[0.1, 0.2, 0.3, 0.4, 0.5],
            cones=(ZeroCone(1), NonNegCone(1), PsdCone(2)),
        )
        again = ConeProgram.from_dict(prog.to_dict())
        for name in ("P", "q", "A", "b"):
            assert np.array_equal(getattr(prog, name), getattr(again, name))
        assert again.cones == prog.cones

    def test_program_is_frozen(self):
        """Test arrays cannot be modified after construction."""
        prog = ConeProgram(P=None, q=[1.0], A=[[-1.0]], b=[0.0], cones=(NonNegCone(1),))
        with pytest.raises(ValueError):
            prog.q[0] = 2.0


class TestSolve:
    """Test suite for the interior-point method."""

    def test_boundary_of_orthant(self):
        """Test min x s.t. x >= 0."""
        prog = ConeProgram(P=None, q=[1.0], A=[[-1.0]], b=[0.0], cones=(NonNegCone(1),))
        sol = solve(prog)

        assert sol.status == ConeStatus.OPTIMAL
        assert abs(sol.x[0]) <= 1e-7
        assert abs(sol.objective) <= 1e-7

    def test_two_by_two_sdp(self):
        """Test min t s.t. [[t, 1], [1, t]] is PSD gives t = 1."""
        prog = ConeProgram(
            P=None,
            q=[1.0],
            A=-svec(np.eye(2)).reshape(-1, 1),
            b=svec(np.array([[0.0, 1.0], [1.0, 0.0]])),
            cones=(PsdCone(2),),
        )
        sol = solve(prog)

        assert sol.status == ConeStatus.OPTIMAL
        assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
        assert cone_violation(prog.cones, sol.s) <= 1e-7
        assert cone_violation(prog.cones, sol.y, dual=True) <= 1e-7
        assert membership_violation(prog, sol) <= PSD_MEMBERSHIP_TOL

    def test_equality_rows(self):
        """Test zero-cone rows are enforced as equalities."""
        # min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0
        prog = ConeProgram(
            P=None,
            q=[1.0, 2.0],
            A=[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            b=[1.0, 0.0, 0.0],
            cones=(ZeroCone(1), NonNegCone(2)),
        )
        sol = solve(prog)

        assert sol.status == ConeStatus.OPTIMAL
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-7)

    def test_random_lps_match_vertex_enumeration(self):
        """Test 100 random bounded 3-D LPs against the vertex oracle."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            C, d = random_bounded_polytope(rng, 3, 6)
            q = rng.normal(size=3)
            sol = solve(ConeProgram(P=None, q=q, A=C, b=d, cones=(NonNegCone(6),)))

            assert sol.status == ConeStatus.OPTIMAL
            assert sol.objective == pytest.approx(lp_oracle(C, d, q), abs=1e-7, rel=1e-7)
            assert max(sol.primal_residual, sol.dual_residual, sol.duality_gap) <= 1e-8
            assert abs(sol.objective - sol.dual_objective) <= 1e-7 * max(1.0, abs(sol.objective))
            assert cone_violation((NonNegCone(6),), sol.s) <= 1e-7
            assert cone_violation((NonNegCone(6),), sol.y, dual=True) <= 1e-7

    def test_scaling_invariance(self):
        """Test scaling the cost leaves the argmin unchanged."""
        C = np.vstack([np.eye(2), -np.eye(2), [[1.0, 1.0]]])
        d = np.array([1.0, 1.0, 1.0, 1.0, 1.5])
        q = np.array([-1.0, -0.3])

        _, x1 = solve_lp(C, d, q)
        _, x2 = solve_lp(C, d, 37.0 * q)

        np.testing.assert_allclose(x1, x2, atol=1e-6)
        np.testing.assert_allclose(x1, [1.0, 0.5], atol=1e-6)

    def test_reproducible(self):
        """Test identical inputs give bitwise identical answers."""
        rng = np.random.default_rng(5)
        C, d = random_bounded_polytope(rng, 3, 7)
        q = rng.normal(size=3)
        prog = ConeProgram(P=np.eye(3) * 0.1, q=q, A=C, b=d, cones=(NonNegCone(7),))

        a, b = solve(prog), solve(prog)

        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)
        assert a.iterations == b.iterations

    def test_primal_infeasible(self):
        """Test an empty region yields a certificate."""
        prog = ConeProgram(P=None, q=[0.0], A=[[1.0], [-1.0]], b=[0.0, -1.0],
                           cones=(NonNegCone(2),))
        sol = solve(prog)

        assert sol.status == ConeStatus.PRIMAL_INFEASIBLE
        assert np.all(sol.y >= -1e-9)
        assert prog.b @ sol.y == pytest.approx(-1.0)

    def test_dual_infeasible(self):
        """Test an unbounded objective yields a ray."""
        prog = ConeProgram(P=None, q=[-1.0], A=[[-1.0]], b=[0.0], cones=(NonNegCone(1),))
        sol = solve(prog)

        assert sol.status == ConeStatus.DUAL_INFEASIBLE
        assert sol.x[0] > 0

    def test_iteration_cap(self):
        """Test MaxIter is reported, not raised."""
        prog = ConeProgram(P=None, q=[1.0, 1.0], A=-np.eye(2), b=[0.0, 0.0],
                           cones=(NonNegCone(2),))
        sol = solve(prog, SolverSettings(max_iter=1))

        assert sol.status == ConeStatus.MAX_ITER
        assert not sol.is_acceptable(1e-12)

    def test_optimal_points_lie_in_their_cones(self):
        """Test every optimal solution passes the membership check."""
        rng = np.random.default_rng(11)
        for _ in range(10):
            C, d = random_bounded_polytope(rng, 3, 8)
            prog = ConeProgram(P=None, q=rng.normal(size=3), A=C, b=d, cones=(NonNegCone(len(d)),))
            sol = solve(prog)
            assert sol.status == ConeStatus.OPTIMAL
            assert membership_violation(prog, sol) <= PSD_MEMBERSHIP_TOL

    def test_cone_exit_downgrades_optimal(self, monkeypatch):
        """Test an optimal point outside its cone is reported as Numerical."""
        import src.optimization.conic_solver as conic_solver

        prog = ConeProgram(P=None, q=[1.0], A=[[-1.0]], b=[0.0], cones=(NonNegCone(1),))
        bad = ConeSolution(
            x=np.array([0.0]), y=np.array([1.0]), s=np.array([-0.5]),
            status=ConeStatus.OPTIMAL, primal_residual=0.0, dual_residual=0.0, duality_gap=0.0,
        )
        monkeypatch.setattr(conic_solver._HomogeneousSolver, "run", lambda self: bad)

        sol = solve(prog)
        assert sol.status == ConeStatus.NUMERICAL
        assert membership_violation(prog, sol) == pytest.approx(0.5)


class TestSolveLp:
    """Test suite for the LP and QP wrappers."""

    def test_box_corner(self):
        """Test the corner of the unit box."""
        C = np.vstack([np.eye(2), -np.eye(2)])
        value, x = solve_lp(C, np.ones(4), [-1.0, -1.0])

        assert value == pytest.approx(-2.0, abs=1e-7)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-7)

    def test_infeasible_pair(self):
        """Test x <= 0 and x >= 1 is reported infeasible."""
        with pytest.raises(InfeasibleError):
            solve_lp([[1.0], [-1.0]], [0.0, -1.0], [1.0])

    def test_unbounded_distinct_from_infeasible(self):
        """Test an unbounded LP raises UnboundedError."""
        with pytest.raises(UnboundedError):
            solve_lp([[-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], [-1.0, 0.0])

    def test_random_2d_polytopes(self):
        """Test random 2-D LPs against vertex enumeration."""
        rng = np.random.default_rng(11)
        for _ in range(20):
            C, d = random_bounded_polytope(rng, 2, 7)
            q = rng.normal(size=2)
            value, x = solve_lp(C, d, q)

            assert value == pytest.approx(lp_oracle(C, d, q), abs=1e-7, rel=1e-7)
            assert np.all(C @ x <= d + 1e-7)

    def test_qp_projection(self):
        """Test a QP projecting a point onto the unit box."""
        C = np.vstack([np.eye(2), -np.eye(2)])
        target = np.array([2.0, 0.3])
        value, x = solve_qp(np.eye(2), -target, C, np.ones(4))

        np.testing.assert_allclose(x, [1.0, 0.3], atol=1e-7)
        assert value == pytest.approx(0.5 * 1.0 ** 2 + 0.5 * 0.09 - 2.0 - 0.09, abs=1e-7)
