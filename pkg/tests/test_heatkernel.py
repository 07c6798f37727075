import numpy as np
import pytest
from scipy.integrate import quad

from levylab import coeffs, flow, heatkernel, levy, operators
from levylab.errors import NumericsError
from levylab.testfunctions import (constant, cos_coordinate, linear,
                                   smoothed_indicator, tanh_coordinate)


def symbol(model, freq=1.0):
    """int (1 - cos(freq z)) nu(dz) for the d=1 truncated measure."""
    chi = model.cutoff.chi
    val, _ = quad(lambda r: (1 - np.cos(freq * r)) * chi(r)
                  * r ** (-1.0 - model.alpha),
                  model.trunc_low, model.support_radius,
                  points=[model.plateau_radius], epsrel=1e-12)
    return 2.0 * val


class TestSemigroup:
    def test_time_zero_exact(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=100, seed=1, record_jacobians=False)
        est = heatkernel.semigroup(additive1d, model1d, cfg,
                                   cos_coordinate(0), 0.0, [[0.3]])
        assert est.values[0] == np.cos(0.3)
        assert est.stderr[0] == 0.0

    def test_constant_functional_exact(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=200, seed=1, record_jacobians=False)
        est = heatkernel.semigroup(additive1d, model1d, cfg, constant(1.0),
                                   0.5, [[0.0], [1.0]])
        assert np.all(est.values == 1.0)

    def test_characteristic_function_oracle(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=20_000, seed=12, record_jacobians=False)
        psi = symbol(model1d)
        for t in (0.25, 0.5):
            est = heatkernel.semigroup(additive1d, model1d, cfg,
                                       cos_coordinate(0), t, [[0.0], [0.7]])
            oracle = np.exp(-t * psi) * np.cos(est.x_grid[:, 0])
            assert np.all(np.abs(est.values - oracle) < 4 * est.stderr)

    def test_markov_property(self, additive1d, model1d):
        # additive structure: semigroup at t+s from x equals semigroup at s
        # averaged over the time-t law; both sides by MC
        cfg = flow.SimConfig(n_paths=20_000, seed=3, record_jacobians=False)
        psi = symbol(model1d)
        t, s = 0.3, 0.2
        est_direct = heatkernel.semigroup(additive1d, model1d, cfg,
                                          cos_coordinate(0), t + s, [[0.4]])
        # exact intermediate step: E cos(x + S_t + S_s)
        #   = exp(-s psi) E cos(x + S_t)
        est_t = heatkernel.semigroup(additive1d, model1d, cfg,
                                     cos_coordinate(0), t, [[0.4]])
        lhs = est_direct.values[0]
        rhs = np.exp(-s * psi) * est_t.values[0]
        tol = 4 * np.hypot(est_direct.stderr[0], est_t.stderr[0])
        assert abs(lhs - rhs) < tol

    def test_contraction(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=5_000, seed=9, record_jacobians=False)
        est = heatkernel.semigroup(additive1d, model1d, cfg,
                                   tanh_coordinate(0), 0.5,
                                   [[-1.0], [0.0], [2.0]])
        assert np.all(np.abs(est.values) <= 1.0 + 4 * est.stderr)


class TestDensity:
    def test_mass_and_symmetry(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=20_000, seed=6, record_jacobians=False)
        est = heatkernel.density(additive1d, model1d, cfg, 0.5, [0.0])
        assert 0.98 <= est.mass <= 1.02
        assert np.all(est.rho >= 0.0)
        # symmetric measure: sample skewness within 4 se
        run = flow.SimConfig(t_end=0.5, n_paths=20_000, seed=6,
                             record_jacobians=False)
        xs = flow.batch_endpoints(additive1d, model1d, run,
                                  np.array([0.0]))[:, 0]
        n = len(xs)
        skew = ((xs - xs.mean()) ** 3).mean() / xs.std() ** 3
        assert abs(skew) < 4 * np.sqrt(6.0 / n) * 3

    def test_degenerate_flagged(self, additive1d):
        empty = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.4,
                               cutoff=levy.HardTruncation(1.0, 0.4))
        cfg = flow.SimConfig(n_paths=200, seed=6, record_jacobians=False)
        with pytest.raises(NumericsError):
            heatkernel.density(additive1d, empty, cfg, 0.5, [0.0])


class TestBigJumpComponent:
    def test_rate_matches_quadrature_nodes(self, model2d):
        z, w, tail = heatkernel._big_jump_grid_nodes(model2d, 200.0, 8, 16)
        assert w.sum() + tail == pytest.approx(
            heatkernel.big_jump_rate(model2d), rel=1e-4)

    def test_sampler_moments(self, model1d):
        rng = np.random.default_rng(np.random.Philox(key=np.array(
            [5, 0], dtype=np.uint64)))
        zs = heatkernel.sample_big_jumps(model1d, rng, 50_000)
        r = np.abs(zs[:, 0])
        assert r.min() > model1d.plateau_radius
        lam = heatkernel.big_jump_rate(model1d)
        # E min(r, 2) under the normalized big measure, by quadrature
        chi = model1d.cutoff.chi
        val = (quad(lambda s: min(s, 2.0) * (1 - chi(s)) * s**-2.0,
                    0.5, 1.0)[0]
               + quad(lambda s: min(s, 2.0) * s**-2.0, 1.0, np.inf)[0])
        expect = 2.0 * val / lam
        emp = np.minimum(r, 2.0)
        se = emp.std(ddof=1) / np.sqrt(len(r))
        assert abs(emp.mean() - expect) < 4 * se


class TestDuhamel:
    def test_zero_perturbation_is_plain_semigroup(self, kinetic, model2d):
        cfg = flow.SimConfig(t_end=0.2, n_paths=500, seed=4,
                             record_jacobians=False)
        x_grid = np.array([[0.0, 0.0], [0.3, -0.2]])
        base = heatkernel.semigroup(kinetic, model2d, cfg,
                                    tanh_coordinate(0), 0.2, x_grid)
        du = heatkernel.duhamel(kinetic, model2d, cfg, tanh_coordinate(0),
                                0.2, x_grid, None)
        assert np.array_equal(du.values, base.values)
        assert du.sweeps == 0

    def test_short_time_collapse(self, additive1d, model1d):
        cfg = flow.SimConfig(t_end=0.02, n_paths=2_000, seed=4,
                             record_jacobians=False)
        est = heatkernel.semigroup(additive1d, model1d, cfg,
                                   cos_coordinate(0), 0.02, [[0.4]])
        assert abs(est.values[0] - np.cos(0.4)) < 4 * est.stderr[0] + 0.02


class TestGeneratorResidual:
    def test_trivial_system_vanishes(self):
        c = coeffs.additive(1)
        empty = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.4,
                               cutoff=levy.HardTruncation(1.0, 0.4))
        cfg = flow.SimConfig(n_paths=500, seed=2, record_jacobians=False)
        spec = operators.OperatorSpec("SMALL_JUMP_L0", empty, c,
                                      pv_inner_cut=0.1)
        rep = heatkernel.generator_residual(
            c, empty, cfg, cos_coordinate(0), 0.5, [[0.2]], spec,
            smoothing_axes=[np.linspace(-1.0, 1.4, 25)], fit_window=0.9)
        assert rep.max_residual < 1e-10
        assert abs(rep.operator_scale) < 1e-12

    def test_additive_full_generator_oracle(self):
        # one noise ensemble serves the whole surface (X_t(x) = x + S_t);
        # the full criterion-scale run lives in the acceptance suite
        m = levy.LevyModel(dim=1, alpha=1.0, delta=0.4, trunc_low=0.02)
        cfg = flow.SimConfig(n_paths=200_000, seed=11,
                             record_jacobians=False, chunk_size=1024)
        t, h = 0.5, 0.01
        axes = [np.linspace(-0.9, 0.9, 37) + 0.2]
        rep = heatkernel.additive_full_generator_residual(
            m, cfg, cos_coordinate(0), t, [[0.2]], h=h,
            smoothing_axes=axes, fit_window=0.62)
        chi = m.cutoff.chi
        psi_small = symbol(m)
        psi_big = 2.0 * (quad(lambda r: (1 - chi(r)) * (1 - np.cos(r))
                              * r**-2.0, m.plateau_radius, 5.0)[0]
                         + 1.0 / 5.0
                         - quad(lambda r: r**-2.0, 5.0, np.inf,
                                weight="cos", wvar=1.0)[0])
        psi = psi_small + psi_big
        oracle = -psi * np.exp(-t * psi) * np.cos(0.2)
        assert rep.operator_value[0] == pytest.approx(oracle, rel=0.05)
        assert rep.max_residual <= max(0.05 * rep.operator_scale,
                                       5.0 * rep.noise_se[0])


class TestGradientScan:
    def test_linear_function_flat(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=400, seed=8, record_jacobians=False)
        axes = [np.linspace(-2.0, 2.0, 17)]
        scan = heatkernel.gradient_decay_scan(
            additive1d, model1d, cfg, linear([1.0]),
            [0.125, 0.25, 0.5, 1.0], 1, axes)
        # CRN surface of a linear f is exactly linear: slope 0
        assert np.allclose(scan.ordinates, 1.0, atol=1e-9)
        assert abs(scan.fitted_exponent) < 0.05

    def test_rough_data_blowup_direction(self, kinetic, model2d):
        # the grid must resolve the transition layer of the smoothed step,
        # hence the anisotropic spacing and fit window
        cfg = flow.SimConfig(n_paths=1_200, seed=8, dt_max=2e-3,
                             record_jacobians=False, chunk_size=512)
        axes = [np.linspace(-0.4, 0.4, 21), np.linspace(-0.9, 0.9, 9)]
        f = smoothed_indicator(0, scale=0.05)
        t_list = [0.1, 0.18, 0.3, 0.5]
        scan1 = heatkernel.gradient_decay_scan(kinetic, model2d, cfg, f,
                                               t_list, 1, axes,
                                               fit_window=[0.17, 0.7])
        assert scan1.fitted_exponent is not None
        assert scan1.fitted_exponent < 0
        if scan1.exponent_stderr is not None:
            assert scan1.fitted_exponent + 2 * scan1.exponent_stderr < 0
        scan2 = heatkernel.gradient_decay_scan(kinetic, model2d, cfg, f,
                                               t_list, 2, axes,
                                               fit_window=[0.17, 0.7])
        # more derivatives blow up at least as fast
        assert scan2.fitted_exponent <= scan1.fitted_exponent + 0.1
