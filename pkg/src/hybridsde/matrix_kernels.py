"""
Dense matrix primitives and matrix-exponential integral kernels.

Everything here works on small dense real matrices (the state dimension of a
control system), so clarity wins over blocking or batching tricks. The
exponential uses scaling and squaring around a fixed-order diagonal Padé
approximant; the two integral kernels are read off the exponential of a block
upper-triangular matrix (Van Loan's construction), which keeps singular
generators on the same code path as invertible ones.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, SingularMatrixError

__all__ = [
    "as_matrix",
    "expm",
    "phi1",
    "gram_integral",
    "solve_linear",
    "operator_norm",
]

_PADE_ORDER = 6
# c_k = (2q-k)! q! / ((2q)! k! (q-k)!)
_PADE_COEFFS = tuple(
    math.factorial(2 * _PADE_ORDER - k)
    * math.factorial(_PADE_ORDER)
    / (math.factorial(2 * _PADE_ORDER) * math.factorial(k) * math.factorial(_PADE_ORDER - k))
    for k in range(_PADE_ORDER + 1)
)
_SCALED_NORM_MAX = 0.5
_ABS_FLOOR = 1e-13


def as_matrix(a, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float array, raising package errors."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _pade(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    eye = np.eye(n)
    power = eye
    num = _PADE_COEFFS[0] * eye
    den = _PADE_COEFFS[0] * eye
    for k in range(1, _PADE_ORDER + 1):
        power = power @ a
        term = _PADE_COEFFS[k] * power
        num = num + term
        den = den + term if k % 2 == 0 else den - term
    return np.linalg.solve(den, num)


def expm(a, t: float = 1.0) -> np.ndarray:
    """
    Matrix exponential ``exp(t * a)``.

    The argument is halved ``s`` times until its norm is at most 0.5, the
    [6/6] Padé approximant is evaluated, and the result is squared ``s`` times.
    At that norm the Padé truncation error sits well below double precision.

    Parameters
    ----------
    a : array_like, shape (n, n)
    t : float
        Time multiplier; may be negative.

    Returns
    -------
    ndarray, shape (n, n)
    """
    a = as_matrix(a, "A", square=True)
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t}")
    ta = t * a
    # max(1-norm, inf-norm) bounds the spectral norm from above
    norm = max(np.abs(ta).sum(axis=0).max(), np.abs(ta).sum(axis=1).max())
    squarings = 0
    if norm > _SCALED_NORM_MAX:
        squarings = int(math.ceil(math.log2(norm / _SCALED_NORM_MAX)))
    result = _pade(ta / 2.0**squarings)
    for _ in range(squarings):
        result = result @ result
    return result


def phi1(a, h: float) -> np.ndarray:
    """Integral of ``exp(s a)`` for ``s`` in ``[0, h]``, valid for singular ``a``."""
    a = as_matrix(a, "A", square=True)
    if not h >= 0:
        raise DomainError(f"h must be nonnegative, got {h}")
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[:n, n:] = np.eye(n)
    return expm(block, h)[:n, n:]


def gram_integral(a, q, h: float) -> np.ndarray:
    """
    Integral of ``exp(s a) q exp(s a.T)`` over ``[0, h]``.

    This is the covariance accumulated over a step of length ``h`` by the
    linear SDE ``dX = a X dt + dW`` with ``Cov(dW) = q dt``.

    Parameters
    ----------
    a : array_like, shape (n, n)
    q : array_like, shape (n, n)
        Symmetric positive semidefinite intensity.
    h : float
        Integration length, ``h >= 0``.

    Returns
    -------
    ndarray, shape (n, n)
        Symmetric positive semidefinite matrix.
    """
    a = as_matrix(a, "A", square=True)
    q = as_matrix(q, "Q", square=True)
    if q.shape != a.shape:
        raise DimensionError(f"Q shape {q.shape} does not match A shape {a.shape}")
    if not h >= 0:
        raise DomainError(f"h must be nonnegative, got {h}")
    qnorm = operator_norm(q)
    if np.abs(q - q.T).max() > max(1e-10 * qnorm, _ABS_FLOOR):
        raise DomainError("Q must be symmetric")
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -a
    block[:n, n:] = q
    block[n:, n:] = a.T
    e = expm(block, h)
    # e[n:, n:] = exp(h a.T), e[:n, n:] = exp(-h a) G
    g = e[n:, n:].T @ e[:n, n:]
    return 0.5 * (g + g.T)


def solve_linear(a, b) -> np.ndarray:
    """
    Solve ``a @ x = b`` by pivoted LU.

    Raises
    ------
    SingularMatrixError
        If any pivot falls below ``1e-12 * ||a||``. Several formulas in this
        package rely on the open-loop matrix being invertible.
    """
    a = as_matrix(a, "A", square=True)
    b_arr = np.asarray(b, dtype=float)
    vector = b_arr.ndim == 1
    b2 = as_matrix(b_arr, "B")
    if b2.shape[0] != a.shape[0]:
        raise DimensionError(f"B has {b2.shape[0]} rows, A has {a.shape[0]}")
    anorm = operator_norm(a)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if anorm == 0.0 or pivots.min() < 1e-12 * anorm:
        raise SingularMatrixError("matrix is numerically singular")
    x = scipy.linalg.lu_solve((lu, piv), b2, check_finite=False)
    return x[:, 0] if vector else x


def operator_norm(a) -> float:
    """Induced Euclidean norm (largest singular value)."""
    a = as_matrix(a, "A")
    return float(np.linalg.norm(a, 2))
