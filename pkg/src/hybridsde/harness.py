"""
Monte Carlo error studies and pathwise identity diagnostics.

Paths are simulated in fixed-size chunks keyed only by path index, so the
numbers do not depend on how many worker threads run the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    SystemModel,
    TimeGrid,
    closed_loop_trajectory,
    simulate_hybrid_sde,
    simulate_limit_Z,
    solve_limit_U,
)
from .errors import DomainError
from .matrix_kernels import expm, gram_integral, operator_norm, phi1
from .noise import NoisePaths, coarsen, generate_batch, generate_noise
from .regimes import DeltaRule, Regime, ScalingRegime, regime_at, snap_delta

__all__ = [
    "CHUNK_PATHS",
    "Z95",
    "McEstimate",
    "McErrorReport",
    "DiagnosticsReport",
    "LadderReport",
    "TransitionCheck",
    "mc_errors",
    "mc_sup_error",
    "fit_loglog",
    "scaling_study",
    "regime_for",
    "verify_sol_diff_identity",
    "verify_lemma_decomposition",
    "diagnose_ladder",
    "gaussian_transition_check",
]

CHUNK_PATHS = 250
Z95 = 1.96


@dataclass(frozen=True)
class McEstimate:
    """Sample statistics of per-path errors for one ``(eps, delta)`` pair."""

    order0_mean: float
    order0_sd: float
    order0_halfwidth: float
    order1_mean: float
    order1_sd: float
    order1_halfwidth: float
    terminal_mean: np.ndarray  # mean |X_i(T) - S_i(T)| per component
    n_paths: int


def _stats(samples: np.ndarray) -> tuple[float, float, float]:
    mean = float(samples.mean(axis=0))
    sd = float(samples.std(axis=0, ddof=1)) if len(samples) > 1 else 0.0
    return mean, sd, Z95 * sd / math.sqrt(len(samples))


def _chunk_errors(model, grid, regime, seed, indices, measurement_noise, x_det, limit_U):
    noise = generate_batch(grid.n_steps, grid.dt, model.n, seed, indices, measurement_noise)
    X = simulate_hybrid_sde(model, grid, noise, regime.epsilon)
    dev = X - x_det
    err0 = np.linalg.norm(dev, axis=-1).max(axis=-1)
    if regime.kind is Regime.REGIME3:
        resid = dev - regime.delta * limit_U
    else:
        Z = simulate_limit_Z(model, grid, noise, regime.c, x_det=x_det)
        resid = dev - regime.epsilon * Z
    err1 = np.linalg.norm(resid, axis=-1).max(axis=-1)
    terminal = np.abs(resid[:, -1, :])
    return err0, err1, terminal


def mc_errors(
    model: SystemModel,
    grid: TimeGrid,
    regime: ScalingRegime,
    n_paths: int,
    seed: int,
    measurement_noise: bool = False,
    threads: int = 1,
) -> McEstimate:
    """
    Zeroth- and first-order sup-norm errors over ``n_paths`` coupled paths.

    Order 0 compares ``X`` with ``x``; order 1 with ``x + eps Z`` (regimes 1-2)
    or ``x + delta U`` (regime 3). Suprema are taken over grid points.
    """
    if n_paths < 2:
        raise DomainError(f"n_paths must be >= 2, got {n_paths}")
    x_det = closed_loop_trajectory(model, grid)
    limit_U = solve_limit_U(model, grid) if regime.kind is Regime.REGIME3 else None
    chunks = [range(s, min(s + CHUNK_PATHS, n_paths)) for s in range(0, n_paths, CHUNK_PATHS)]

    def run(indices):
        return _chunk_errors(model, grid, regime, seed, indices, measurement_noise, x_det, limit_U)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    err0 = np.concatenate([p[0] for p in parts])
    err1 = np.concatenate([p[1] for p in parts])
    terminal = np.concatenate([p[2] for p in parts])
    m0, sd0, hw0 = _stats(err0)
    m1, sd1, hw1 = _stats(err1)
    return McEstimate(m0, sd0, hw0, m1, sd1, hw1, terminal.mean(axis=0), n_paths)


def mc_sup_error(
    model: SystemModel,
    grid: TimeGrid,
    regime: ScalingRegime,
    n_paths: int,
    seed: int,
    order: int,
    measurement_noise: bool = False,
    threads: int = 1,
) -> tuple[float, float]:
    """Mean and 95% half-width of the order-0 or order-1 sup-norm error."""
    if order not in (0, 1):
        raise DomainError(f"order must be 0 or 1, got {order}")
    est = mc_errors(model, grid, regime, n_paths, seed, measurement_noise, threads)
    if order == 0:
        return est.order0_mean, est.order0_halfwidth
    return est.order1_mean, est.order1_halfwidth


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through ``(log2 x, log2 y)``: slope, intercept, R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise DomainError("need at least two matching points to fit a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs positive values")
    lx, ly = np.log2(x), np.log2(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float(((ly - fitted) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass
class McErrorReport:
    rule: DeltaRule
    c_mode: str
    epsilons: list
    deltas: list
    cs: list  # None marks c = infinity (regime 3, first order via U)
    n_paths: int
    seed: int
    T: float
    dt: float
    measurement_noise: bool
    order0_errors: list = field(default_factory=list)
    order0_halfwidths: list = field(default_factory=list)
    order1_errors: list = field(default_factory=list)
    order1_halfwidths: list = field(default_factory=list)
    terminal_errors: list = field(default_factory=list)  # per eps, one entry per component
    slope0: float = float("nan")
    slope1: float = float("nan")
    r2_0: float = float("nan")
    r2_1: float = float("nan")
    terminal_slopes: list = field(default_factory=list)
    terminal_r2: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "rule": self.rule.to_dict(),
            "c_mode": self.c_mode,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "T": self.T,
            "dt": self.dt,
            "measurement_noise": self.measurement_noise,
            "slope0": self.slope0,
            "slope1": self.slope1,
            "r2_0": self.r2_0,
            "r2_1": self.r2_1,
            "terminal_slopes": list(self.terminal_slopes),
            "terminal_r2": list(self.terminal_r2),
        }


def regime_for(rule: DeltaRule, epsilon: float, delta: float, c_mode: str) -> ScalingRegime:
    if c_mode == "per_run":
        return ScalingRegime.per_run(epsilon, delta)
    if c_mode == "from_rule":
        r = regime_at(rule, epsilon)
        return ScalingRegime(epsilon, delta, r.kind, r.c, r.kappa, r.kappa_tilde, r.small_enough)
    raise DomainError(f"unknown c_mode {c_mode!r}")


def scaling_study(
    model: SystemModel,
    rule: DeltaRule,
    epsilons: Sequence[float],
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    c_mode: str = "per_run",
    measurement_noise: bool = False,
    threads: int = 1,
) -> McErrorReport:
    """
    Error-versus-epsilon study with log2-log2 slope fits.

    ``c_mode="per_run"`` treats every pair as regime 2 with ``c = delta/eps``
    and uses ``x + eps Z``. ``c_mode="from_rule"`` takes ``c`` (and the regime)
    from the limit of the rule, switching to ``x + delta U`` in regime 3.
    All ``eps`` share one grid step ``dt`` and one seed, so the studies use
    common random numbers across ``eps``.
    """
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) < 2:
        raise DomainError("a slope fit needs at least two epsilon values")
    if any(a <= b for a, b in zip(epsilons, epsilons[1:])):
        raise DomainError("epsilons must be strictly decreasing")
    report = McErrorReport(rule, c_mode, epsilons, [], [], n_paths, seed, T, dt, measurement_noise)
    for eps in epsilons:
        delta, _, _ = snap_delta(rule.delta(eps), dt)
        grid = TimeGrid.build(T, dt, delta)
        regime = regime_for(rule, eps, grid.delta, c_mode)
        est = mc_errors(model, grid, regime, n_paths, seed, measurement_noise, threads)
        report.deltas.append(grid.delta)
        report.cs.append(regime.c)
        report.order0_errors.append(est.order0_mean)
        report.order0_halfwidths.append(est.order0_halfwidth)
        report.order1_errors.append(est.order1_mean)
        report.order1_halfwidths.append(est.order1_halfwidth)
        report.terminal_errors.append([float(v) for v in est.terminal_mean])
    report.slope0, _, report.r2_0 = _safe_fit(epsilons, report.order0_errors)
    report.slope1, _, report.r2_1 = _safe_fit(epsilons, report.order1_errors)
    term = np.asarray(report.terminal_errors)
    fits = [_safe_fit(epsilons, term[:, j]) for j in range(term.shape[1])]
    report.terminal_slopes = [f[0] for f in fits]
    report.terminal_r2 = [f[2] for f in fits]
    return report


def _safe_fit(x, y):
    if np.all(np.asarray(y) > 0):
        return fit_loglog(x, y)
    return float("nan"), float("nan"), float("nan")


# -- pathwise identities -------------------------------------------------------


def _local_quantities(model: SystemModel, grid: TimeGrid, noise: NoisePaths, epsilon: float, X):
    if X is None:
        X = simulate_hybrid_sde(model, grid, noise, epsilon)
    n, m = model.n, grid.m
    eye = np.eye(n)
    inv_bk = model.inv_A_BK
    E = np.stack([expm(model.A, r * grid.dt) for r in range(m)])
    D = np.einsum("rij,jk->rik", E - eye, eye - inv_bk)
    F = np.einsum("rij,jk->rik", E - eye, inv_bk)
    p = grid.sample_index
    r = grid.offset
    Xp = X[..., p, :]
    Vp = noise.V()[..., p, :]
    step = expm(model.A, grid.dt)
    # N_j = exp(t_j A)(M_j - M_p) = sum_{p <= i < j} exp((t_j - t_i) A) dW_i
    N = np.zeros_like(X)
    for j in range(grid.n_steps):
        if (j + 1) % m:
            N[..., j + 1, :] = (N[..., j, :] + noise.dW[..., j, :]) @ step.T
    det_part = np.einsum("jik,...jk->...ji", D[r], Xp)
    meas_part = np.einsum("jik,...jk->...ji", F[r], Vp)
    return X, Xp, det_part, N, meas_part


def verify_sol_diff_identity(
    model: SystemModel,
    grid: TimeGrid,
    noise: NoisePaths,
    epsilon: float,
    X: Optional[np.ndarray] = None,
) -> float:
    """
    Max-norm residual of the per-interval increment formula on the grid.

    Checks ``X_t - X_p = [e^{hA} - I][I - A^{-1}BK] X_p + eps e^{tA}(M_t - M_p)
    - eps (e^{hA} - I) A^{-1}BK V_p`` with ``p`` the last sampling instant,
    ``h = t - p`` and ``M_t`` the Ito sum of ``e^{-sA} dW_s``. The stochastic
    term is accumulated as ``sum exp((t - t_i)A) dW_i`` over the current
    interval, which is the same quantity without the ``e^{-tA}`` growth.
    ``X`` defaults to the Euler-Maruyama path; the residual is then pure
    discretization error.
    """
    X, Xp, det_part, N, meas_part = _local_quantities(model, grid, noise, epsilon, X)
    rhs = det_part + epsilon * N - epsilon * meas_part
    return float(np.linalg.norm((X - Xp) - rhs, axis=-1).max())


@dataclass(frozen=True)
class DiagnosticsReport:
    sol_diff_residual: float
    lemma_residuals: tuple  # (decomposition residual, sup|L2|, sup|L3|)
    l1_minus_drift: float  # sup |L1 - ell|
    dt_used: float


def verify_lemma_decomposition(
    model: SystemModel,
    grid: TimeGrid,
    noise: NoisePaths,
    epsilon: float,
    c: float,
    X: Optional[np.ndarray] = None,
) -> DiagnosticsReport:
    """
    Split ``(1/eps) int_0^t (X_s - X_p(s)) ds`` into its three pieces.

    ``L1`` is driven by the held state, ``L2`` by the state noise and ``L3`` by
    the held measurement noise. All integrals are left-point sums on the grid.
    The report also gives ``sup |L1 - ell|`` where ``ell(t) = (c/2)(x(t) - x0)``
    is the effective drift the sum converges to.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    X, Xp, det_part, N, meas_part = _local_quantities(model, grid, noise, epsilon, X)
    dt = grid.dt

    def running(f):
        out = np.zeros_like(f)
        np.cumsum(f[..., :-1, :] * dt, axis=-2, out=out[..., 1:, :])
        return out

    L1 = running(det_part) / epsilon
    L2 = running(N)
    L3 = -running(meas_part)
    target = running(X - Xp) / epsilon
    sup = lambda a: float(np.linalg.norm(a, axis=-1).max())
    x_det = closed_loop_trajectory(model, grid)
    ell = 0.5 * c * (x_det - model.x0)
    rhs = det_part + epsilon * N - epsilon * meas_part
    return DiagnosticsReport(
        sol_diff_residual=sup((X - Xp) - rhs),
        lemma_residuals=(sup(L1 + L2 + L3 - target), sup(L2), sup(L3)),
        l1_minus_drift=sup(L1 - ell),
        dt_used=dt,
    )


@dataclass
class LadderReport:
    dts: list
    sol_diff: list
    decomposition: list
    l2_sup: list
    l3_sup: list
    l1_minus_drift: list
    order_sol_diff: float
    order_decomposition: float
    threshold: float

    @property
    def monotone(self) -> bool:
        dec = lambda v: all(a > b for a, b in zip(v, v[1:]))
        return dec(self.sol_diff) and dec(self.decomposition)

    @property
    def passed(self) -> bool:
        return (
            self.monotone
            and self.order_sol_diff >= self.threshold
            and self.order_decomposition >= self.threshold
        )


def diagnose_ladder(
    model: SystemModel,
    T: float,
    delta: float,
    epsilon: float,
    dts: Sequence[float],
    seed: int,
    c: Optional[float] = None,
    measurement_noise: bool = True,
    threshold: float = 0.4,
) -> LadderReport:
    """
    Identity residuals along a dt ladder driven by one Brownian path.

    Noise is drawn on the finest step and summed in blocks for the coarser
    ones, so each rung sees the same underlying path. ``dts`` are given in
    decreasing order; the fitted order is the log2-log2 slope of residual
    against dt.
    """
    dts = [float(d) for d in dts]
    if len(dts) < 2 or any(a <= b for a, b in zip(dts, dts[1:])):
        raise DomainError("dts must contain at least two strictly decreasing steps")
    if c is None:
        c = delta / epsilon
    finest = TimeGrid.build(T, dts[-1], delta)
    base = generate_noise(finest.n_steps, finest.dt, model.n, seed, 0, measurement_noise)
    rows = []
    for dt in dts:
        factor = int(round(dt / finest.dt))
        grid = TimeGrid.build(T, dt, delta)
        rows.append(verify_lemma_decomposition(model, grid, coarsen(base, factor), epsilon, c))
    sol = [r.sol_diff_residual for r in rows]
    dec = [r.lemma_residuals[0] for r in rows]
    return LadderReport(
        dts=dts,
        sol_diff=sol,
        decomposition=dec,
        l2_sup=[r.lemma_residuals[1] for r in rows],
        l3_sup=[r.lemma_residuals[2] for r in rows],
        l1_minus_drift=[r.l1_minus_drift for r in rows],
        order_sol_diff=fit_loglog(dts, sol)[0],
        order_decomposition=fit_loglog(dts, dec)[0],
        threshold=threshold,
    )


# -- one-interval Gaussian transition ------------------------------------------


@dataclass(frozen=True)
class TransitionCheck:
    sample_mean: np.ndarray
    sample_cov: np.ndarray
    exact_mean: np.ndarray
    exact_cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    mean_bias_bound: float
    cov_bias_bound: float

    @property
    def mean_ok(self) -> bool:
        return bool(np.all(np.abs(self.sample_mean - self.exact_mean) <= 3 * self.mean_se + self.mean_bias_bound))

    @property
    def cov_ok(self) -> bool:
        return bool(np.all(np.abs(self.sample_cov - self.exact_cov) <= 3 * self.cov_se + self.cov_bias_bound))


def gaussian_transition_check(
    model: SystemModel,
    epsilon: float,
    delta: float,
    dt: float,
    n_paths: int,
    seed: int,
    measurement_noise: bool = True,
) -> TransitionCheck:
    """
    Compare Euler-Maruyama moments at ``t = delta`` with the exact Gaussian law.

    Over the first interval the control is held at ``-K x0`` (``V_0 = 0``), so
    ``X_delta`` is Gaussian with mean ``[e^{delta A} - phi1(A, delta) BK] x0`` and
    covariance ``eps^2 * gram_integral(A, I, delta)``. Tolerances are three
    standard errors plus explicit first-order-in-``dt`` bounds on the
    Euler-Maruyama bias of each moment.
    """
    grid = TimeGrid.build(delta, dt, delta)
    n = model.n
    noise = generate_batch(grid.n_steps, dt, n, seed, range(n_paths), measurement_noise)
    X_end = simulate_hybrid_sde(model, grid, noise, epsilon)[:, -1, :]
    mean = X_end.mean(axis=0)
    cov = np.cov(X_end, rowvar=False)
    exact_mean = (expm(model.A, delta) - phi1(model.A, delta) @ model.BK) @ model.x0
    exact_cov = epsilon**2 * gram_integral(model.A, np.eye(n), delta)
    mean_se = np.sqrt(np.diag(cov) / n_paths)
    d = np.diag(cov)
    cov_se = np.sqrt((np.outer(d, d) + cov**2) / n_paths)

    a = operator_norm(model.A)
    u = float(np.linalg.norm(model.BK @ model.x0))
    growth = math.exp(a * delta)
    y_max = growth * (float(np.linalg.norm(model.x0)) + delta * u)
    ydd_max = a * (a * y_max + u)
    mean_bias = 0.5 * dt * delta * ydd_max * growth
    cov_bias = epsilon**2 * delta * dt * growth**2 * (a + delta * a * a)
    return TransitionCheck(mean, cov, exact_mean, exact_cov, mean_se, cov_se, mean_bias, cov_bias)
