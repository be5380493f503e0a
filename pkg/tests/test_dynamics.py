import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec, solve_ivp, trapezoid

from hybridsde.dynamics import (
    SystemModel,
    TimeGrid,
    closed_loop_state,
    closed_loop_trajectory,
    effective_drift,
    first_order_approx,
    floor_to_sample,
    rescaled_fluctuation,
    sampled_data_state,
    simulate_bundle,
    simulate_hybrid_sde,
    simulate_limit_Z,
    solve_limit_U,
)
from hybridsde.errors import DimensionError, DomainError, GridError, SingularMatrixError
from hybridsde.noise import NoisePaths, coarsen, generate_batch, generate_noise
from hybridsde.regimes import Regime, ScalingRegime

from conftest import REF_A, REF_B, REF_X0

TIGHT = dict(method="DOP853", rtol=1e-12, atol=1e-13)


def ode_oracle(f, t_end, y0, t_eval=None):
    sol = solve_ivp(f, (0.0, t_end), np.asarray(y0, dtype=float), t_eval=t_eval, **TIGHT)
    return sol.y.T


def zero_noise(grid, n):
    z = np.zeros((grid.n_steps, n))
    return NoisePaths(z, z.copy(), grid.dt)


class TestFloorToSample:
    def test_examples(self):
        assert floor_to_sample(19, 8) == 16
        assert floor_to_sample(16, 8) == 16
        assert floor_to_sample(0, 5) == 0

    def test_array(self):
        np.testing.assert_array_equal(floor_to_sample(np.arange(7), 3), [0, 0, 0, 3, 3, 3, 6])

    def test_bad_input(self):
        with pytest.raises(DomainError):
            floor_to_sample(3, 0)
        with pytest.raises(DomainError):
            floor_to_sample(-1, 2)


class TestTimeGrid:
    def test_reference_grid(self):
        g = TimeGrid.build(8.0, 2.0**-5, 2.0**-4)
        assert (g.m, g.n_steps) == (2, 256)
        assert g.times[-1] == 8.0
        assert g.sample_index[5] == 4 and g.offset[5] == 1

    def test_incommensurate(self):
        with pytest.raises(GridError):
            TimeGrid.build(1.0, 0.03, 0.1)
        with pytest.raises(GridError):
            TimeGrid.build(1.05, 0.1, 0.2)

    def test_ordering(self):
        with pytest.raises(GridError):
            TimeGrid.build(1.0, 0.25, 2.0)

    def test_refined(self):
        g = TimeGrid.build(1.0, 0.125, 0.25).refined(4)
        assert (g.dt, g.m, g.n_steps) == (0.03125, 8, 32)


class TestSystemModel:
    def test_singular_a(self):
        with pytest.raises(SingularMatrixError):
            SystemModel([[0.0, 1.0], [0.0, 0.0]], REF_B, [[1.0, 1.0]], [1.0, 0.0])

    def test_shapes(self):
        with pytest.raises(DimensionError):
            SystemModel(REF_A, REF_B, [[1.0, 1.0]], [1.0, 0.0, 0.0])

    def test_inverse_product(self, ref_model):
        np.testing.assert_allclose(ref_model.A @ ref_model.inv_A_BK, ref_model.BK, atol=1e-14)


class TestClosedLoop:
    def test_trivial(self, ref_model):
        np.testing.assert_array_equal(closed_loop_state(ref_model.with_x0([0.0, 0.0]), 3.0), 0.0)
        np.testing.assert_array_equal(closed_loop_state(ref_model, 0.0), REF_X0)

    def test_rk_oracle(self, ref_model):
        ref = ode_oracle(lambda t, x: ref_model.Acl @ x, 1.0, REF_X0)[-1]
        np.testing.assert_allclose(closed_loop_state(ref_model, 1.0), ref, atol=1e-8)

    def test_trajectory_matches_pointwise(self, ref_model):
        g = TimeGrid.build(2.0, 2.0**-5, 2.0**-4)
        traj = closed_loop_trajectory(ref_model, g)
        np.testing.assert_allclose(traj[-1], closed_loop_state(ref_model, 2.0), atol=1e-12)


class TestSampledData:
    def test_no_control(self, ref_model):
        m = ref_model.with_K([[0.0, 0.0]])
        g = TimeGrid.build(2.0, 2.0**-6, 2.0**-3)
        xs = sampled_data_state(m, g)
        exact = np.array([scipy.linalg.expm(m.A * t) @ m.x0 for t in g.times])
        np.testing.assert_allclose(xs, exact, atol=1e-12)

    def test_first_interval_oracle(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-6, 0.5)
        xs = sampled_data_state(ref_model, g)
        u = ref_model.BK @ ref_model.x0
        idx = np.arange(g.m + 1)
        ref = ode_oracle(lambda t, x: ref_model.A @ x - u, 0.5, REF_X0, t_eval=g.times[idx])
        np.testing.assert_allclose(xs[idx], ref, atol=1e-8)

    def test_piecewise_oracle(self, ref_model):
        g = TimeGrid.build(2.0, 2.0**-5, 0.25)
        xs = sampled_data_state(ref_model, g)
        x = np.array(REF_X0)
        for k in range(g.n_steps // g.m):
            u = ref_model.BK @ x
            seg = ode_oracle(lambda t, y: ref_model.A @ y - u, g.delta, x)
            x = seg[-1]
            np.testing.assert_allclose(xs[(k + 1) * g.m], x, atol=1e-8)

    def test_linear_in_delta(self, ref_model):
        errs = []
        for k in (9, 10, 11):
            g = TimeGrid.build(8.0, 2.0**-k, 2.0**-k)
            errs.append(np.abs(sampled_data_state(ref_model, g) - closed_loop_trajectory(ref_model, g)).max())
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(2.0, rel=0.2)


class TestHybridSDE:
    def test_zero_epsilon_converges_to_flow(self, ref_model):
        errs = []
        for k in (6, 7, 8, 9):
            g = TimeGrid.build(8.0, 2.0**-k, 2.0**-4)
            X = simulate_hybrid_sde(ref_model, g, zero_noise(g, 2), 0.0)
            errs.append(np.abs(X - sampled_data_state(ref_model, g)).max())
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates >= 0.9)

    def test_uncontrolled_mean(self, ref_model):
        m = ref_model.with_K([[0.0, 0.0]])
        g = TimeGrid.build(0.5, 2.0**-10, 2.0**-4)
        eps = 0.1
        finals = []
        for start in range(0, 10_000, 1000):
            noise = generate_batch(g.n_steps, g.dt, 2, 17, range(start, start + 1000))
            finals.append(simulate_hybrid_sde(m, g, noise, eps)[:, -1, :])
        finals = np.concatenate(finals)
        se = finals.std(axis=0, ddof=1) / np.sqrt(len(finals))
        exact = scipy.linalg.expm(m.A * g.T) @ m.x0
        assert np.all(np.abs(finals.mean(axis=0) - exact) <= 3 * se)

    def test_held_control_latch(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-7, 2.0**-4)
        noise = generate_noise(g.n_steps, g.dt, 2, seed=4)
        eps = 0.2
        X = simulate_hybrid_sde(ref_model, g, noise, eps)
        control = (X[1:] - X[:-1] - eps * noise.dW) / g.dt - X[:-1] @ ref_model.A.T
        for p in range(0, g.n_steps, g.m):
            block = control[p : p + g.m]
            np.testing.assert_allclose(block, np.broadcast_to(block[0], block.shape), atol=1e-9)
            held = -ref_model.BK @ (X[p] + eps * noise.V()[p])
            np.testing.assert_allclose(block[0], held, atol=1e-9)

    def test_path_continuity(self, ref_model):
        means = []
        for k in (6, 8, 10):
            g = TimeGrid.build(1.0, 2.0**-k, 2.0**-4)
            noise = generate_batch(g.n_steps, g.dt, 2, 3, range(200))
            X = simulate_hybrid_sde(ref_model, g, noise, 0.5)
            means.append(np.linalg.norm(np.diff(X, axis=1), axis=-1).max(axis=1).mean())
        assert means[0] > means[1] > means[2]

    def test_self_convergence_order_one(self, ref_model):
        fine_k = 12
        g_fine = TimeGrid.build(2.0, 2.0**-fine_k, 2.0**-4)
        fine = generate_noise(g_fine.n_steps, g_fine.dt, 2, seed=8)
        diffs = []
        for k in (7, 8, 9, 10):
            g = TimeGrid.build(2.0, 2.0**-k, 2.0**-4)
            g2 = TimeGrid.build(2.0, 2.0**-(k + 1), 2.0**-4)
            n1 = coarsen(fine, 2 ** (fine_k - k))
            n2 = coarsen(fine, 2 ** (fine_k - k - 1))
            X1 = simulate_hybrid_sde(ref_model, g, n1, 0.1)
            X2 = simulate_hybrid_sde(ref_model, g2, n2, 0.1)[::2]
            diffs.append(np.abs(X1 - X2).max())
        order = -np.polyfit(np.arange(len(diffs)), np.log2(diffs), 1)[0]
        assert order == pytest.approx(1.0, abs=0.25)

    def test_noise_shape_mismatch(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-5, 2.0**-4)
        with pytest.raises(DimensionError):
            simulate_hybrid_sde(ref_model, g, generate_noise(10, g.dt, 2), 0.1)
        with pytest.raises(DomainError):
            simulate_hybrid_sde(ref_model, g, zero_noise(g, 2), -0.1)


class TestEffectiveDrift:
    def test_trivial(self, ref_model):
        np.testing.assert_array_equal(effective_drift(ref_model, 0.0, 2.0), 0.0)
        np.testing.assert_array_equal(effective_drift(ref_model, 2.0, 0.0), 0.0)

    def test_trapezoid_oracle(self, ref_model):
        s = np.linspace(0.0, 1.0, 4001)
        integrand = np.array([ref_model.Acl @ scipy.linalg.expm(ref_model.Acl * v) @ ref_model.x0 for v in s])
        ref = 1.0 * trapezoid(integrand, s, axis=0)
        np.testing.assert_allclose(effective_drift(ref_model, 2.0, 1.0), ref, atol=1e-6)

    def test_rejects_negative(self, ref_model):
        with pytest.raises(DomainError):
            effective_drift(ref_model, -1.0, 1.0)


class TestLimitZ:
    def test_zero_noise_zero_c(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-5, 2.0**-4)
        assert not simulate_limit_Z(ref_model, g, zero_noise(g, 2), 0.0).any()

    @settings(max_examples=15, deadline=None)
    @given(lam=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
    def test_linearity(self, ref_model, lam, seed):
        g = TimeGrid.build(1.0, 2.0**-6, 2.0**-4)
        noise = generate_noise(g.n_steps, g.dt, 2, seed=seed)
        zbar = simulate_limit_Z(ref_model, g, zero_noise(g, 2), 2.0)
        z = simulate_limit_Z(ref_model, g, noise, 2.0)
        zl = simulate_limit_Z(ref_model, g, noise.scaled(lam), 2.0)
        np.testing.assert_allclose(zl, lam * (z - zbar) + zbar, atol=1e-12 * max(1.0, abs(lam)))

    def test_zero_noise_ode_oracle(self, ref_model):
        F = ref_model.Acl
        G = ref_model.BK @ F

        def rhs(t, y):
            x, z = y[:2], y[2:]
            return np.concatenate([F @ x, F @ z + G @ x])

        ref = ode_oracle(rhs, 2.0, np.concatenate([ref_model.x0, [0.0, 0.0]]))[-1, 2:]
        errs = []
        for k in (6, 7, 8):
            g = TimeGrid.build(2.0, 2.0**-k, 2.0**-4)
            errs.append(np.abs(simulate_limit_Z(ref_model, g, zero_noise(g, 2), 2.0)[-1] - ref).max())
        assert errs[0] < 0.05
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)

    def test_reads_continuous_v(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-5, 2.0**-3)
        noise = generate_noise(g.n_steps, g.dt, 2, seed=2)
        w_only = NoisePaths(noise.dW, np.zeros_like(noise.dV), g.dt)
        z = simulate_limit_Z(ref_model, g, noise, 0.0)
        zw = simulate_limit_Z(ref_model, g, w_only, 0.0)
        # first step sees V_0 = 0, second step sees V_1 != 0 (mid-interval)
        np.testing.assert_array_equal(z[1], zw[1])
        assert not np.allclose(z[2], zw[2])


class TestLimitU:
    def test_zero_initial_state(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-5, 2.0**-4)
        assert not solve_limit_U(ref_model.with_x0([0.0, 0.0]), g).any()
        assert not solve_limit_U(ref_model, g)[0].any()

    def test_variation_of_constants(self, ref_model):
        F = ref_model.Acl
        G = 0.5 * ref_model.BK @ F
        T = 8.0

        def integrand(s):
            return scipy.linalg.expm((T - s) * F) @ G @ scipy.linalg.expm(s * F) @ ref_model.x0

        ref, _ = quad_vec(integrand, 0.0, T, epsabs=1e-12, epsrel=1e-12)
        g = TimeGrid.build(T, 2.0**-5, 2.0**-4)
        np.testing.assert_allclose(solve_limit_U(ref_model, g)[-1], ref, atol=1e-6)


class TestRescaling:
    def test_identity(self):
        x = np.arange(6.0).reshape(3, 2)
        assert not rescaled_fluctuation(x, x, 0.1).any()
        np.testing.assert_array_equal(first_order_approx(x, np.ones_like(x), 0.0), x)
        np.testing.assert_array_equal(first_order_approx(x, np.zeros_like(x), 0.3), x)

    def test_scale_doubled_halves(self):
        rng = np.random.default_rng(0)
        X, x = rng.standard_normal((2, 5, 2))
        np.testing.assert_allclose(rescaled_fluctuation(X, x, 0.2), 2 * rescaled_fluctuation(X, x, 0.4))

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        X, x = rng.standard_normal((2, 5, 2))
        eps = 2.0**-5
        np.testing.assert_allclose(first_order_approx(x, rescaled_fluctuation(X, x, eps), eps), X, atol=1e-12)

    def test_errors(self):
        with pytest.raises(DomainError):
            rescaled_fluctuation(np.ones((2, 2)), np.ones((2, 2)), 0.0)
        with pytest.raises(DimensionError):
            rescaled_fluctuation(np.ones((3, 2)), np.ones((2, 2)), 1.0)


class TestBundle:
    def test_coupling_and_reproducibility(self, ref_model):
        g = TimeGrid.build(8.0, 2.0**-5, 2.0**-4)
        regime = ScalingRegime.per_run(2.0**-5, 2.0**-4)

        def run():
            return simulate_bundle(ref_model, g, generate_noise(g.n_steps, g.dt, 2, seed=1), regime)

        a, b = run(), run()
        for name in ("X", "x_det", "x_sampled", "fluct_limit", "first_order"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
        for arr in (a.X, a.x_det, a.x_sampled):
            np.testing.assert_array_equal(arr[0], REF_X0)
        assert not a.fluct_limit[0].any()
        np.testing.assert_allclose(a.first_order, a.x_det + 2.0**-5 * a.fluct_limit)

    def test_rescaled_z_close_to_limit(self, ref_model):
        g = TimeGrid.build(8.0, 2.0**-9, 2.0**-4)
        regime = ScalingRegime.per_run(2.0**-5, 2.0**-4)
        b = simulate_bundle(ref_model, g, generate_noise(g.n_steps, g.dt, 2, seed=6, measurement_noise=False), regime)
        gap = np.abs(b.fluctuation - b.fluct_limit).max()
        assert gap < 0.5 * np.abs(b.fluctuation).max()

    def test_regime3_uses_u(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-6, 2.0**-3)
        r = ScalingRegime(2.0**-6, 2.0**-3, Regime.REGIME3, None, kappa_tilde=0.125)
        b = simulate_bundle(ref_model, g, generate_noise(g.n_steps, g.dt, 2, seed=1), r)
        np.testing.assert_array_equal(b.fluct_limit, solve_limit_U(ref_model, g))
        assert b.scale == 2.0**-3

    def test_regime_grid_mismatch(self, ref_model):
        g = TimeGrid.build(1.0, 2.0**-6, 2.0**-3)
        with pytest.raises(GridError):
            simulate_bundle(ref_model, g, zero_noise(g, 2), ScalingRegime.per_run(0.1, 0.25))
