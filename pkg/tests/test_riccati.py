import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from hybridsde.errors import DimensionError, DomainError, StabilizabilityError
from hybridsde.riccati import LqrSpec, care_residual, closed_loop_eigen_check, solve_care

from conftest import REF_A, REF_B


def companion_gain(a, q1, q2):
    """Closed-form LQR gain for A=[[0,1],[a,0]], B=e2, Q=diag(q1,q2), R=1."""
    k1 = a + math.sqrt(a * a + q1)
    return np.array([k1, math.sqrt(q2 + 2 * k1)])


def test_ref_gain():
    sol = solve_care(LqrSpec(REF_A, REF_B, np.eye(2), [[1.0]]))
    np.testing.assert_allclose(sol.K[0], [1.618, 2.058], atol=1e-3)
    np.testing.assert_allclose(sol.K[0], companion_gain(0.5, 1.0, 1.0), atol=1e-12)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(sol.P, 2) ** 2)
    assert max(e.real for e in closed_loop_eigen_check(REF_A, REF_B, sol.K)) < 0


@pytest.mark.parametrize("a,q1,q2", [(0.0, 1.0, 1.0), (-2.0, 3.0, 0.5), (4.0, 0.1, 2.0)])
def test_companion_closed_form(a, q1, q2):
    sol = solve_care(LqrSpec([[0.0, 1.0], [a, 0.0]], REF_B, np.diag([q1, q2]), [[1.0]]))
    np.testing.assert_allclose(sol.K[0], companion_gain(a, q1, q2), rtol=1e-10)


def test_scalar_quadratic_formula():
    sol = solve_care(LqrSpec([[0.0]], [[1.0]], [[1.0]], [[1.0]]))
    assert sol.P[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert sol.K[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_scalar_general():
    a, b, q, r = 1.5, 2.0, 3.0, 0.5
    p = r * (a + math.sqrt(a * a + b * b * q / r)) / (b * b)
    sol = solve_care(LqrSpec([[a]], [[b]], [[q]], [[r]]))
    assert sol.P[0, 0] == pytest.approx(p, rel=1e-12)


def test_zero_cost_stable_plant():
    sol = solve_care(LqrSpec(np.diag([-1.0, -2.0]), [[1.0], [1.0]], np.zeros((2, 2)), [[1.0]]))
    np.testing.assert_allclose(sol.P, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.K, 0.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), m=st.integers(1, 2))
def test_matches_scipy_and_invariants(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((n, n))
    Q = C @ C.T + 0.1 * np.eye(n)
    R = np.eye(m) * rng.uniform(0.5, 2.0)
    sol = solve_care(LqrSpec(A, B, Q, R))
    ref = scipy.linalg.solve_continuous_are(A, B, Q, R)
    np.testing.assert_allclose(sol.P, ref, rtol=1e-7, atol=1e-8 * max(1.0, np.abs(ref).max()))
    assert np.linalg.norm(sol.P - sol.P.T) <= 1e-9 * np.linalg.norm(sol.P)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(sol.P, 2) ** 2)
    assert np.linalg.norm(care_residual(LqrSpec(A, B, Q, R), sol.P)) == pytest.approx(sol.residual)
    assert max(e.real for e in closed_loop_eigen_check(A, B, sol.K)) < 0


def test_uncontrollable_unstable_mode():
    with pytest.raises(StabilizabilityError):
        solve_care(LqrSpec(np.diag([1.0, -1.0]), [[0.0], [1.0]], np.eye(2), [[1.0]]))


def test_imaginary_axis_hamiltonian():
    with pytest.raises(StabilizabilityError):
        solve_care(LqrSpec([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [0.0]], np.eye(2), [[1.0]]))


class TestValidation:
    def test_r_not_positive_definite(self):
        with pytest.raises(DomainError):
            LqrSpec(REF_A, REF_B, np.eye(2), [[0.0]])
        with pytest.raises(DomainError):
            LqrSpec(REF_A, REF_B, np.eye(2), [[-1.0]])

    def test_q_asymmetric_or_indefinite(self):
        with pytest.raises(DomainError):
            LqrSpec(REF_A, REF_B, [[1.0, 1.0], [0.0, 1.0]], [[1.0]])
        with pytest.raises(DomainError):
            LqrSpec(REF_A, REF_B, np.diag([1.0, -1.0]), [[1.0]])

    def test_shapes(self):
        with pytest.raises(DimensionError):
            LqrSpec(REF_A, [[1.0, 0.0, 0.0]], np.eye(2), [[1.0]])


class TestEigenCheck:
    def test_diagonal(self):
        eigs = closed_loop_eigen_check(np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[0.0, 0.0]])
        assert sorted(e.real for e in eigs) == [-2.0, -1.0]

    def test_double_integrator_not_stable(self):
        eigs = closed_loop_eigen_check([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[0.0, 0.0]])
        assert all(e == 0 for e in eigs)
        assert not max(e.real for e in eigs) < 0

    def test_larger_system_matches_lapack(self):
        rng = np.random.default_rng(4)
        A, B, K = rng.standard_normal((4, 4)), rng.standard_normal((4, 2)), rng.standard_normal((2, 4))
        got = np.sort_complex(np.array(closed_loop_eigen_check(A, B, K)))
        np.testing.assert_allclose(got, np.sort_complex(np.linalg.eigvals(A - B @ K)), atol=1e-8)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            closed_loop_eigen_check(np.eye(2), [[1.0], [0.0]], [[1.0, 0.0, 0.0]])
