import numpy as np
import pytest

from levylab import flow, levy, malliavin
from levylab.levy import CubicWeight
from levylab.results import fit_loglog
from levylab.testfunctions import constant, tanh_coordinate


W1 = CubicWeight(1.0)


def kinetic_reduced_exact(t):
    return np.array([[t**3 / 3.0, -(t**2) / 2.0], [-(t**2) / 2.0, t]])


class TestReducedMatrix:
    def test_additive_is_t_identity(self, additive1d, model1d):
        rec = flow.simulate(additive1d, model1d, flow.SimConfig(seed=9),
                            np.array([0.0]))
        red = malliavin.reduced_matrix(rec, additive1d)
        assert abs(red[0, 0] - 1.0) < 1e-10

    def test_zero_horizon(self, additive1d, model1d):
        rec = flow.simulate(additive1d, model1d, flow.SimConfig(seed=9),
                            np.array([0.0]))
        red = malliavin.reduced_matrix(rec, additive1d, t_max=0.0)
        assert np.all(red == 0.0)

    def test_kinetic_against_analytic(self, kinetic, model2d):
        rec = flow.simulate(kinetic, model2d,
                            flow.SimConfig(t_end=0.5, seed=4),
                            np.array([0.1, 0.2]))
        red = malliavin.reduced_matrix(rec, kinetic)
        assert np.abs(red - kinetic_reduced_exact(0.5)).max() < 1e-6

    def test_kinetic_cubic_fill_in(self, kinetic, model2d):
        rec = flow.simulate(kinetic, model2d, flow.SimConfig(seed=4),
                            np.array([0.0, 0.0]))
        ts = np.geomspace(0.05, 0.4, 8)
        lams = np.array([
            np.linalg.eigvalsh(malliavin.reduced_matrix(rec, kinetic,
                                                        t_max=t))[0]
            for t in ts
        ])
        slope, _, _ = fit_loglog(ts, lams)
        assert 2.7 <= slope <= 3.3

    def test_loewner_monotone(self, sine1d, model1d):
        rec = flow.simulate(sine1d, model1d, flow.SimConfig(seed=31),
                            np.array([0.3]))
        prev = np.zeros((1, 1))
        for t in (0.25, 0.5, 0.75, 1.0):
            cur = malliavin.reduced_matrix(rec, sine1d, t_max=t)
            assert np.linalg.eigvalsh(cur - prev)[0] >= -1e-12
            prev = cur


class TestJumpWeightedMatrix:
    def test_no_jumps(self, additive1d, model1d):
        rec = flow.simulate_with_jumps(additive1d, model1d, np.array([0.0]),
                                       [], np.empty((0, 1)), 1.0, 1e-3)
        assert np.all(malliavin.jump_weighted_matrix(rec, additive1d, W1)
                      == 0.0)

    def test_single_plateau_jump(self, additive1d, model1d):
        rec = flow.simulate_with_jumps(additive1d, model1d, np.array([0.0]),
                                       [0.4], np.array([[0.2]]), 1.0, 1e-3)
        jw = malliavin.jump_weighted_matrix(rec, additive1d, W1)
        assert jw[0, 0] == pytest.approx(0.2**3, rel=1e-14)

    def test_large_jumps_contribute_nothing(self, additive1d, model1d):
        rec = flow.simulate_with_jumps(additive1d, model1d, np.array([0.0]),
                                       [0.3, 0.7], np.array([[0.6], [0.8]]),
                                       1.0, 1e-3)
        assert np.all(malliavin.jump_weighted_matrix(rec, additive1d, W1)
                      == 0.0)

    def test_psd(self, kinetic, model2d):
        for i in range(4):
            rec = flow.simulate(kinetic, model2d,
                                flow.SimConfig(t_end=0.5, seed=40),
                                np.zeros(2), path_index=i)
            jw = malliavin.jump_weighted_matrix(rec, kinetic, W1)
            assert np.linalg.eigvalsh(jw)[0] >= -1e-12


class TestPathwiseDerivative:
    def test_outside_support_is_zero(self, additive1d, model1d):
        rec = flow.simulate_with_jumps(additive1d, model1d, np.array([0.0]),
                                       [0.5], np.array([[0.9]]), 1.0, 1e-3)
        d = malliavin.PerturbationDirection(0, W1)
        out = malliavin.pathwise_derivative(rec, additive1d, d)
        assert np.all(out == 0.0)

    def test_additive_closed_form(self, additive1d, model1d):
        rec = flow.simulate(additive1d, model1d, flow.SimConfig(seed=9),
                            np.array([0.0]))
        d = malliavin.PerturbationDirection(0, W1)
        out = malliavin.pathwise_derivative(rec, additive1d, d)
        assert out[0] == pytest.approx(W1(rec.jumps.sizes).sum(), rel=1e-9)

    @pytest.mark.parametrize("name", ["kinetic", "sine1d"])
    def test_variation_identity(self, request, name, model1d, model2d):
        c = request.getfixturevalue(name)
        m = model2d if c.dim == 2 else model1d
        t = 0.5
        for i in range(10):
            rec = flow.simulate(c, m, flow.SimConfig(t_end=t, seed=55),
                                np.zeros(c.dim), path_index=i)
            sig = malliavin.jump_weighted_matrix(rec, c, W1)
            target = rec.jacobian[-1] @ sig
            for j in range(c.dim):
                d = malliavin.PerturbationDirection(j, W1)
                fd = malliavin.pathwise_derivative(rec, c, d, eps=1e-5)
                denom = max(np.linalg.norm(target[:, j]), 1e-12)
                assert np.linalg.norm(fd - target[:, j]) / denom < 1e-3

    def test_eps_domain_guard(self, additive1d, model1d):
        rec = flow.simulate(additive1d, model1d, flow.SimConfig(seed=9),
                            np.array([0.0]))
        d = malliavin.PerturbationDirection(0, W1)
        with pytest.raises(Exception):
            malliavin.pathwise_derivative(rec, additive1d, d, eps=1.0)


class TestDivergence:
    def test_zero_direction(self, additive1d, model1d):
        rec = flow.simulate(additive1d, model1d, flow.SimConfig(seed=9),
                            np.array([0.0]))
        # a weight supported below trunc_low sees no jumps and no measure
        tiny = CubicWeight(0.05)
        d = malliavin.PerturbationDirection(0, tiny)
        assert malliavin.divergence(rec, additive1d, model1d, d) == 0.0

    def test_single_jump_hand_value(self, additive1d, model1d):
        # additive d=1: v = zeta(z), g = <dlog kappa, v> + zeta'(z)
        #   on the plateau of both cutoffs: g(z) = -2 z |z| + 3 z |z| = z |z|
        z1 = 0.2
        rec = flow.simulate_with_jumps(additive1d, model1d, np.array([0.0]),
                                       [0.4], np.array([[z1]]), 1.0, 1e-3)
        d = malliavin.PerturbationDirection(0, W1)
        got = malliavin.divergence(rec, additive1d, model1d, d)
        # compensator vanishes by antipodal pairing (odd integrand)
        assert got == pytest.approx(z1 * abs(z1), abs=1e-8)

    def test_centered_over_paths(self, additive1d, model1d):
        d = malliavin.PerturbationDirection(0, W1)
        vals = []
        for i in range(400):
            rec = flow.simulate(additive1d, model1d,
                                flow.SimConfig(seed=61), np.array([0.0]),
                                path_index=i)
            vals.append(malliavin.divergence(rec, additive1d, model1d, d))
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean()) < 4 * se


class TestIbp:
    def test_constant_functional(self, additive1d, model1d_fine):
        cfg = flow.SimConfig(n_paths=4000, seed=3)
        res = malliavin.ibp_test(additive1d, model1d_fine, cfg,
                                 constant(1.0), 0)
        assert res.lhs == 0.0
        assert abs(res.rhs) <= 4 * res.stderr_rhs

    def test_additive_tanh(self, additive1d, model1d_fine):
        cfg = flow.SimConfig(n_paths=20_000, seed=3)
        res = malliavin.ibp_test(additive1d, model1d_fine, cfg,
                                 tanh_coordinate(0), 0)
        assert abs(res.gap) <= 4 * res.pooled_stderr

    def test_linear_drift_system(self, model1d_fine):
        from levylab import coeffs

        c = coeffs.linear_drift([[0.3]])
        cfg = flow.SimConfig(n_paths=20_000, dt_max=2e-3, seed=3,
                             chunk_size=1024)
        res = malliavin.ibp_test(c, model1d_fine, cfg, tanh_coordinate(0), 0)
        assert abs(res.gap) <= 4 * res.pooled_stderr

    def test_suite_matches_single(self, additive1d, model1d_fine):
        cfg = flow.SimConfig(n_paths=2000, seed=3)
        single = malliavin.ibp_test(additive1d, model1d_fine, cfg,
                                    tanh_coordinate(0), 0)
        suite = malliavin.ibp_suite(additive1d, model1d_fine, cfg,
                                    [tanh_coordinate(0)], [0])
        got = suite[(tanh_coordinate(0).name, 0)]
        assert got.lhs == pytest.approx(single.lhs, rel=1e-12)
        assert got.rhs == pytest.approx(single.rhs, rel=1e-12)


class TestLaplaceScan:
    def test_lambda_zero_is_one(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=500, seed=7)
        scan = malliavin.laplace_scan(additive1d, model1d, cfg,
                                      [1.0], [0.0, 1.0], t=0.5)
        assert scan.ordinates[0] == 1.0

    def test_reduced_additive_deterministic(self, additive1d, model1d):
        cfg = flow.SimConfig(n_paths=200, seed=7)
        lambdas = np.array([0.5, 1.0, 2.0])
        scan = malliavin.laplace_scan(additive1d, model1d, cfg, [1.0],
                                      lambdas, t=0.5, which="reduced")
        assert np.allclose(scan.ordinates, np.exp(-lambdas * 0.5), atol=1e-12)
        # variance is exactly zero pathwise; streaming accumulation leaves
        # only catastrophic-cancellation dust
        assert np.all(scan.stderr < 1e-8)

    def test_kinetic_scan_smoke(self, kinetic, model2d):
        cfg = flow.SimConfig(n_paths=3000, seed=7, chunk_size=512)
        lambdas = np.array([1.0, 10.0, 100.0, 1000.0])
        scan = malliavin.laplace_scan(kinetic, model2d, cfg, [1.0, 0.0],
                                      lambdas, t=0.5)
        assert scan.extras["monotone"]
        assert np.all(scan.ordinates > 0) and np.all(scan.ordinates <= 1.0)
        assert scan.fitted_exponent is not None
        assert scan.fitted_exponent > 0


class TestReport:
    def test_report_fields(self, kinetic, model2d):
        rec = flow.simulate(kinetic, model2d, flow.SimConfig(t_end=0.5,
                                                             seed=2),
                            np.zeros(2))
        rep = malliavin.malliavin_report(rec, kinetic, model2d)
        assert rep.reduced.shape == (2, 2)
        assert np.linalg.eigvalsh(rep.jump_weighted)[0] >= -1e-12
        assert rep.min_eigenvalue >= -1e-12
        assert rep.divergences.shape == (2,)
        assert np.all(np.isfinite(rep.divergences))
