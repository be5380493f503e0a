"""
Continuous-time algebraic Riccati equation and LQR gain.

The stabilizing solution is obtained from the matrix sign function of the
Hamiltonian, followed by one Newton-Kleinman step to polish the residual.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, StabilizabilityError
from .matrix_kernels import as_matrix, solve_linear

__all__ = ["LqrSpec", "RiccatiSolution", "solve_care", "closed_loop_eigen_check", "care_residual"]

_SIGN_TOL = 1e-12
_SIGN_MAXITER = 100


@dataclass(frozen=True)
class LqrSpec:
    """Plant ``(A, B)`` with quadratic state cost ``Q`` and control cost ``R``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A", square=True)
        B = as_matrix(self.B, "B")
        Q = as_matrix(self.Q, "Q", square=True)
        R = as_matrix(self.R, "R", square=True)
        n, m = B.shape
        if A.shape[0] != n or Q.shape[0] != n or R.shape[0] != m:
            raise DimensionError(
                f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}"
            )
        qscale = max(np.abs(Q).max(), 1.0)
        if np.abs(Q - Q.T).max() > 1e-10 * qscale:
            raise DomainError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10 * qscale:
            raise DomainError("Q must be positive semidefinite")
        if np.abs(R - R.T).max() > 1e-10 * max(np.abs(R).max(), 1.0):
            raise DomainError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 1e-10:
            raise DomainError("R must be positive definite")
        for name, value in (("A", A), ("B", B), ("Q", Q), ("R", R)):
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int = 0


def care_residual(spec: LqrSpec, P: np.ndarray) -> np.ndarray:
    """``A'P + PA + Q - P B R^-1 B' P`` for a candidate ``P``."""
    G = spec.B @ solve_linear(spec.R, spec.B.T)
    return spec.A.T @ P + P @ spec.A + spec.Q - P @ G @ P


def _matrix_sign(H: np.ndarray) -> tuple[np.ndarray, int]:
    S = H.copy()
    dim = S.shape[0]
    for it in range(1, _SIGN_MAXITER + 1):
        Sinv = np.linalg.inv(S)
        # determinant scaling speeds up the early iterations only
        change_hint = np.linalg.norm(S - Sinv, "fro") / np.linalg.norm(S, "fro")
        if change_hint > 1e-2:
            det = abs(np.linalg.det(S))
            mu = det ** (-1.0 / dim) if det > 0 and np.isfinite(det) else 1.0
        else:
            mu = 1.0
        S_next = 0.5 * (mu * S + Sinv / mu)
        if np.linalg.norm(S_next - S, "fro") <= _SIGN_TOL * np.linalg.norm(S, "fro"):
            return S_next, it
        S = S_next
    raise ConvergenceError(f"sign iteration did not converge in {_SIGN_MAXITER} steps")


def _lyapunov(F: np.ndarray, C: np.ndarray) -> np.ndarray:
    # F' X + X F + C = 0 through the Kronecker form (n is small)
    n = F.shape[0]
    eye = np.eye(n)
    op = np.kron(eye, F.T) + np.kron(F.T, eye)
    x = solve_linear(op, -C.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def solve_care(spec: LqrSpec) -> RiccatiSolution:
    """
    Stabilizing solution of ``A'P + PA + Q - P B R^-1 B' P = 0``.

    Returns ``P``, the gain ``K = R^-1 B' P`` and the Frobenius norm of the
    residual. Raises :class:`ConvergenceError` when the sign iteration stalls
    and :class:`StabilizabilityError` when ``A - B K`` is not Hurwitz.
    """
    A, B, Q, R = spec.A, spec.B, spec.Q, spec.R
    n = A.shape[0]
    G = B @ solve_linear(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    try:
        W, iterations = _matrix_sign(H)
    except np.linalg.LinAlgError as exc:
        # eigenvalues on the imaginary axis make the Hamiltonian singular
        raise StabilizabilityError(f"Hamiltonian has imaginary-axis eigenvalues: {exc}") from exc
    eye = np.eye(n)
    lhs = np.vstack([W[:n, n:], W[n:, n:] + eye])
    rhs = -np.vstack([W[:n, :n] + eye, W[n:, :n]])
    P = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    P = 0.5 * (P + P.T)

    # Newton-Kleinman polish
    F = A - G @ P
    if np.all(np.isfinite(F)):
        try:
            P_next = _lyapunov(F, Q + P @ G @ P)
        except np.linalg.LinAlgError:
            P_next = P
        if np.linalg.norm(care_residual(spec, P_next)) < np.linalg.norm(care_residual(spec, P)):
            P = P_next

    K = solve_linear(R, B.T @ P)
    eigs = closed_loop_eigen_check(A, B, K)
    if max(e.real for e in eigs) >= 0:
        raise StabilizabilityError("closed loop A - BK is not stable; is (A, B) stabilizable?")
    residual = float(np.linalg.norm(care_residual(spec, P)))
    return RiccatiSolution(P=P, K=np.atleast_2d(K), residual=residual, iterations=iterations)


def closed_loop_eigen_check(A, B, K) -> list[complex]:
    """Eigenvalues of ``A - B K``.

    Dimension two and below use the characteristic polynomial; larger systems
    defer to LAPACK.
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    K = as_matrix(np.atleast_2d(K), "K")
    if B.shape[0] != A.shape[0] or K.shape != (B.shape[1], A.shape[0]):
        raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} K{K.shape}")
    F = A - B @ K
    n = F.shape[0]
    if n == 1:
        return [complex(F[0, 0])]
    if n == 2:
        tr = F[0, 0] + F[1, 1]
        det = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        root = cmath.sqrt(tr * tr / 4.0 - det)
        return [tr / 2.0 + root, tr / 2.0 - root]
    return [complex(v) for v in np.linalg.eigvals(F)]
