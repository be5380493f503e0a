"""
Coupled trajectories of a linear plant under sampled state feedback.

All processes live on one uniform grid ``t_j = j * dt`` whose sampling
instants are every ``m``-th point (``delta = m * dt``). Which sample a grid
point belongs to is settled with integer arithmetic on indices.

Processes produced here, for ``Acl = A - B K``:

* ``x``        closed-loop flow ``exp(t Acl) x0`` (exact),
* ``x_delta``  zero-order-hold flow, exact on each sampling interval,
* ``X``        the noisy hybrid system, Euler-Maruyama,
* ``Z``        limiting fluctuation SDE when ``delta/eps -> c < inf``, Euler-Maruyama,
* ``U``        limiting (deterministic) fluctuation when ``delta/eps -> inf``, RK4.

Stochastic routines accept single-path noise of shape ``(n_steps, n)`` or a
batch ``(n_paths, n_steps, n)`` and return arrays with the matching leading
axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError, GridError
from .matrix_kernels import as_matrix, expm, phi1, solve_linear
from .noise import NoisePaths
from .regimes import Regime, ScalingRegime

__all__ = [
    "SystemModel",
    "TimeGrid",
    "PathBundle",
    "floor_to_sample",
    "closed_loop_state",
    "closed_loop_trajectory",
    "sampled_data_state",
    "simulate_hybrid_sde",
    "effective_drift",
    "simulate_limit_Z",
    "solve_limit_U",
    "rescaled_fluctuation",
    "first_order_approx",
    "simulate_bundle",
]

GRID_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Plant ``dx/dt = A x + B u`` under feedback ``u = -K x``, started at ``x0``.

    ``A`` must be invertible.
    """

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A", square=True)
        B = as_matrix(self.B, "B")
        K = as_matrix(np.atleast_2d(self.K), "K")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        n = A.shape[0]
        if B.shape[0] != n or K.shape != (B.shape[1], n) or x0.shape != (n,):
            raise DimensionError(
                f"inconsistent shapes A{A.shape} B{B.shape} K{K.shape} x0{x0.shape}"
            )
        if not np.all(np.isfinite(x0)):
            raise DomainError("x0 has non-finite entries")
        for name, value in (("A", A), ("B", B), ("K", K), ("x0", x0)):
            object.__setattr__(self, name, value)
        # raises SingularMatrixError when A is not invertible
        object.__setattr__(self, "_inv_A_BK", solve_linear(A, B @ K))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def BK(self) -> np.ndarray:
        return self.B @ self.K

    @property
    def Acl(self) -> np.ndarray:
        return self.A - self.B @ self.K

    @property
    def inv_A_BK(self) -> np.ndarray:
        """``A^{-1} B K``."""
        return self._inv_A_BK

    def with_x0(self, x0) -> "SystemModel":
        return SystemModel(self.A, self.B, self.K, x0)

    def with_K(self, K) -> "SystemModel":
        return SystemModel(self.A, self.B, K, self.x0)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_steps`` steps of ``dt`` with a sample every ``m`` steps."""

    T: float
    dt: float
    delta: float
    m: int
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and self.m >= 1 and self.n_steps >= 1):
            raise GridError(f"invalid grid {self}")
        if not self.dt <= self.delta <= self.T * (1 + GRID_RTOL):
            raise GridError(f"need dt <= delta <= T, got dt={self.dt}, delta={self.delta}, T={self.T}")

    @classmethod
    def build(cls, T: float, dt: float, delta: float) -> "TimeGrid":
        """Validate commensurability and return the grid.

        ``delta/dt`` and ``T/dt`` must be integers to within ``1e-9``
        relative; the stored ``delta`` and ``T`` are the exact multiples.
        """
        if not (T > 0 and dt > 0 and delta > 0) or not all(map(math.isfinite, (T, dt, delta))):
            raise GridError(f"T, dt, delta must be positive and finite, got {T}, {dt}, {delta}")
        m = int(round(delta / dt))
        n_steps = int(round(T / dt))
        if m < 1 or abs(m * dt - delta) > GRID_RTOL * delta:
            raise GridError(f"delta={delta!r} is not an integer multiple of dt={dt!r}")
        if n_steps < 1 or abs(n_steps * dt - T) > GRID_RTOL * T:
            raise GridError(f"T={T!r} is not an integer multiple of dt={dt!r}")
        return cls(T=n_steps * dt, dt=dt, delta=m * dt, m=m, n_steps=n_steps)

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @cached_property
    def sample_index(self) -> np.ndarray:
        """Grid index of the most recent sampling instant, for every grid point."""
        return floor_to_sample(np.arange(self.n_steps + 1), self.m)

    @cached_property
    def offset(self) -> np.ndarray:
        """Steps elapsed since the most recent sampling instant."""
        return np.arange(self.n_steps + 1) - self.sample_index

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.dt / factor, self.delta, self.m * factor, self.n_steps * factor)


def floor_to_sample(step_index, m: int):
    """Index of the last sampling instant at or before ``step_index``."""
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if isinstance(step_index, np.ndarray):
        if np.any(step_index < 0):
            raise DomainError("step indices must be nonnegative")
        return (step_index // m) * m
    if step_index < 0:
        raise DomainError(f"step index must be nonnegative, got {step_index}")
    return (int(step_index) // m) * m


def closed_loop_state(model: SystemModel, t: float) -> np.ndarray:
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    return expm(model.Acl, t) @ model.x0


def closed_loop_trajectory(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    """``x(t_j)`` on every grid point, shape ``(n_steps+1, n)``."""
    step = expm(model.Acl, grid.dt)
    out = np.empty((grid.n_steps + 1, model.n))
    out[0] = model.x0
    for j in range(grid.n_steps):
        out[j + 1] = step @ out[j]
    return out


def _interval_propagators(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    # Phi_r = exp(r dt A) - phi1(A, r dt) B K for r = 0..m
    BK = model.BK
    return np.stack(
        [expm(model.A, r * grid.dt) - phi1(model.A, r * grid.dt) @ BK for r in range(grid.m + 1)]
    )


def sampled_data_state(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    """
    Zero-order-hold trajectory on the grid.

    On each sampling interval the flow is the exact solution of
    ``dx/dt = A x - B K x(k delta)``; nothing is integrated numerically.
    """
    phis = _interval_propagators(model, grid)
    out = np.empty((grid.n_steps + 1, model.n))
    held = model.x0.copy()
    for j in range(grid.n_steps + 1):
        r = j % grid.m
        if r == 0 and j > 0:
            held = phis[grid.m] @ held
        out[j] = phis[r] @ held
    return out


def _check_noise(noise: NoisePaths, grid: TimeGrid, n: int):
    if noise.n_steps != grid.n_steps or noise.dim != n:
        raise DimensionError(
            f"noise has {noise.n_steps} steps of dim {noise.dim}, grid needs {grid.n_steps} x {n}"
        )
    if abs(noise.dt - grid.dt) > GRID_RTOL * grid.dt:
        raise DimensionError(f"noise dt {noise.dt} differs from grid dt {grid.dt}")


def simulate_hybrid_sde(
    model: SystemModel, grid: TimeGrid, noise: NoisePaths, epsilon: float
) -> np.ndarray:
    """
    Euler-Maruyama for the sampled, noisy closed loop.

    ``X_{j+1} = X_j + [A X_j - BK (X_p + eps V_p)] dt + eps dW_j`` with
    ``p = floor_to_sample(j, m)``. The measured value ``X_p + eps V_p`` is
    latched at each sampling instant and held until the next one.
    """
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    _check_noise(noise, grid, model.n)
    batch = noise.dW.shape[:-2]
    dt = grid.dt
    At, BKt = model.A.T, model.BK.T
    V = noise.V() if epsilon else None
    dW = noise.dW
    X = np.empty(batch + (grid.n_steps + 1, model.n))
    X[..., 0, :] = model.x0
    held = None
    for j in range(grid.n_steps):
        Xj = X[..., j, :]
        if j % grid.m == 0:
            measured = Xj + epsilon * V[..., j, :] if epsilon else Xj
            held = measured @ BKt
        X[..., j + 1, :] = Xj + (Xj @ At - held) * dt + epsilon * dW[..., j, :]
    return X


def effective_drift(model: SystemModel, c: float, t: float) -> np.ndarray:
    """``(c/2) * integral_0^t Acl x(s) ds``, evaluated as ``(c/2)(x(t) - x0)``."""
    if c < 0 or t < 0:
        raise DomainError(f"need c >= 0 and t >= 0, got c={c}, t={t}")
    return 0.5 * c * (closed_loop_state(model, t) - model.x0)


def simulate_limit_Z(
    model: SystemModel,
    grid: TimeGrid,
    noise: NoisePaths,
    c: float,
    x_det: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Euler-Maruyama for the limiting fluctuation SDE (finite ``c``).

    ``Z_{j+1} = Z_j + [Acl Z_j - BK V_j + (c/2) BK Acl x(t_j)] dt + dW_j``,
    ``Z_0 = 0``. Unlike the hybrid system, ``V`` enters at every grid point,
    not only at sampling instants.
    """
    if c < 0:
        raise DomainError(f"c must be nonnegative, got {c}")
    _check_noise(noise, grid, model.n)
    if x_det is None:
        x_det = closed_loop_trajectory(model, grid)
    batch = noise.dW.shape[:-2]
    dt = grid.dt
    BK = model.BK
    Aclt, BKt = model.Acl.T, BK.T
    forcing = (0.5 * c) * (x_det @ (BK @ model.Acl).T)
    V = noise.V()
    dW = noise.dW
    measurement = bool(np.any(noise.dV))
    Z = np.zeros(batch + (grid.n_steps + 1, model.n))
    for j in range(grid.n_steps):
        Zj = Z[..., j, :]
        drift = Zj @ Aclt + forcing[j]
        if measurement:
            drift = drift - V[..., j, :] @ BKt
        Z[..., j + 1, :] = Zj + drift * dt + dW[..., j, :]
    return Z


def solve_limit_U(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    """Classical RK4 for ``dU/dt = Acl U + (1/2) BK Acl x(t)``, ``U(0) = 0``."""
    dt = grid.dt
    Acl = model.Acl
    G = 0.5 * model.BK @ Acl
    half = expm(Acl, dt / 2)
    U = np.zeros((grid.n_steps + 1, model.n))
    x = model.x0.copy()
    for j in range(grid.n_steps):
        xm = half @ x
        x1 = half @ xm
        u = U[j]
        k1 = Acl @ u + G @ x
        k2 = Acl @ (u + 0.5 * dt * k1) + G @ xm
        k3 = Acl @ (u + 0.5 * dt * k2) + G @ xm
        k4 = Acl @ (u + dt * k3) + G @ x1
        U[j + 1] = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        x = x1
    return U


def rescaled_fluctuation(X: np.ndarray, x_det: np.ndarray, scale: float) -> np.ndarray:
    if scale == 0:
        raise DomainError("scale must be nonzero")
    X = np.asarray(X, dtype=float)
    x_det = np.asarray(x_det, dtype=float)
    if X.shape[-2:] != x_det.shape[-2:]:
        raise DimensionError(f"shape mismatch {X.shape} vs {x_det.shape}")
    return (X - x_det) / scale


def first_order_approx(x_det: np.ndarray, fluct: np.ndarray, scale: float) -> np.ndarray:
    x_det = np.asarray(x_det, dtype=float)
    fluct = np.asarray(fluct, dtype=float)
    if x_det.shape[-2:] != fluct.shape[-2:]:
        raise DimensionError(f"shape mismatch {x_det.shape} vs {fluct.shape}")
    return x_det + scale * fluct


@dataclass(frozen=True, eq=False)
class PathBundle:
    """One coupled realization (or a batch of them) on a shared grid.

    ``first_order`` is ``x + eps Z`` in regimes 1-2 and ``x + delta U`` in
    regime 3; ``fluct_limit`` holds ``Z`` or ``U`` accordingly.
    """

    grid: TimeGrid
    regime: ScalingRegime
    X: np.ndarray
    x_det: np.ndarray
    x_sampled: np.ndarray
    fluct_limit: np.ndarray
    first_order: np.ndarray
    noise: NoisePaths = field(repr=False)

    @property
    def scale(self) -> float:
        return self.regime.delta if self.regime.kind is Regime.REGIME3 else self.regime.epsilon

    @property
    def fluctuation(self) -> np.ndarray:
        """``(X - x)/eps`` or ``(X - x)/delta``, recomputed from ``X``."""
        return rescaled_fluctuation(self.X, self.x_det, self.scale)


def simulate_bundle(
    model: SystemModel, grid: TimeGrid, noise: NoisePaths, regime: ScalingRegime
) -> PathBundle:
    """Run every process of one realization on the same grid and increments."""
    if abs(regime.delta - grid.delta) > GRID_RTOL * grid.delta:
        raise GridError(f"regime delta {regime.delta} differs from grid delta {grid.delta}")
    x_det = closed_loop_trajectory(model, grid)
    x_sampled = sampled_data_state(model, grid)
    X = simulate_hybrid_sde(model, grid, noise, regime.epsilon)
    if regime.kind is Regime.REGIME3:
        limit = solve_limit_U(model, grid)
        first = first_order_approx(x_det, limit, regime.delta)
    else:
        limit = simulate_limit_Z(model, grid, noise, regime.c, x_det=x_det)
        first = first_order_approx(x_det, limit, regime.epsilon)
    return PathBundle(grid, regime, X, x_det, x_sampled, limit, first, noise)
