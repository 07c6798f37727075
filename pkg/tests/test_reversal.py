import numpy as np
import pytest

from levylab import coeffs, flow, levy, reversal
from levylab.errors import ConfigError
from levylab.testfunctions import gaussian_bump


class TestRoundTrip:
    def test_linear_drift_no_jumps(self):
        a = np.array([[0.3, -1.0], [0.8, -0.2]])
        c = coeffs.linear_drift(a)
        rec = flow.simulate(c, None, flow.SimConfig(seed=1),
                            np.array([1.0, -0.5]))
        run = reversal.reverse_and_check(c, None, rec)
        assert run.roundtrip_error < 1e-8

    @pytest.mark.parametrize("name", ["additive1d", "sine1d", "kinetic"])
    def test_builtin_systems(self, request, name, model1d, model2d):
        c = request.getfixturevalue(name)
        m = model2d if c.dim == 2 else model1d
        recs = list(flow.batch_simulate(c, m,
                                        flow.SimConfig(n_paths=32, seed=7),
                                        np.zeros(c.dim)))
        errs = [reversal.reverse_and_check(c, m, r).roundtrip_error
                for r in recs]
        assert max(errs) < 1e-6

    def test_state_dependent_toy(self, model1d):
        c = coeffs.scaled_state_1d(0.4)
        recs = list(flow.batch_simulate(c, model1d,
                                        flow.SimConfig(n_paths=16, seed=3),
                                        np.array([1.0])))
        errs = [reversal.reverse_and_check(c, model1d, r).roundtrip_error
                for r in recs]
        assert max(errs) < 1e-6

    def test_compensated_system(self, model1d):
        c = coeffs.asym1d()
        rec = flow.simulate(c, model1d, flow.SimConfig(seed=5, dt_max=5e-3),
                            np.array([0.2]))
        assert reversal.reverse_and_check(c, model1d,
                                          rec).roundtrip_error < 1e-6

    def test_batch_matches_single(self, sine1d, model1d):
        recs = list(flow.batch_simulate(sine1d, model1d,
                                        flow.SimConfig(n_paths=12, seed=9),
                                        np.array([0.4])))
        batch = reversal.roundtrip_errors(sine1d, model1d, recs)
        single = np.array([
            reversal.reverse_and_check(sine1d, model1d, r).roundtrip_error
            for r in recs
        ])
        assert np.allclose(batch, single, atol=1e-12)


class TestJumpBookkeeping:
    def test_reversed_jumps_are_forward_jumps(self, sine1d, model1d):
        rec = flow.simulate(sine1d, model1d, flow.SimConfig(seed=13),
                            np.array([0.2]))
        run = reversal.reverse_and_check(sine1d, model1d, rec)
        assert np.allclose(np.sort(run.reversed_sizes[:, 0]),
                           np.sort(rec.jumps.sizes[:, 0]))
        assert np.allclose(np.sort(rec.t_end - run.reversed_times),
                           np.sort(rec.jumps.times))

    def test_hat_drift_constant_coupling(self, model1d):
        c = coeffs.constant_coupling([[0.7]])
        hat = coeffs.reversed_coefficients(c, model1d)
        xs = np.array([[0.0], [2.0], [-1.3]])
        assert np.abs(hat.drift(xs) - c.drift(xs)).max() < 1e-14


class TestL1Bound:
    def test_identity_at_time_zero(self, additive1d, model1d):
        f = gaussian_bump([0.0], 0.5)
        cfg = flow.SimConfig(n_paths=200, seed=5, record_jacobians=False)
        rep = reversal.l1_bound_check(additive1d, model1d, cfg, f,
                                      [np.linspace(-6, 6, 121)],
                                      t_list=[0.0])
        assert rep.ratios[0] == pytest.approx(1.0, abs=1e-12)

    def test_additive_contracts(self, additive1d, model1d):
        f = gaussian_bump([0.0], 0.5)
        cfg = flow.SimConfig(n_paths=400, seed=5, record_jacobians=False)
        rep = reversal.l1_bound_check(additive1d, model1d, cfg, f,
                                      [np.linspace(-7, 7, 141)],
                                      t_list=[0.25, 0.5, 1.0])
        assert np.all(rep.ratios <= 1.0 + 0.05)

    def test_kinetic_stable(self, kinetic, model2d):
        f = gaussian_bump([0.0, 0.0], 0.6)
        cfg = flow.SimConfig(n_paths=60, seed=5, dt_max=5e-3,
                             record_jacobians=False)
        axes = [np.linspace(-5, 5, 41), np.linspace(-5, 5, 41)]
        rep = reversal.l1_bound_check(kinetic, model2d, cfg, f, axes,
                                      t_list=[0.25, 0.5, 1.0])
        assert np.isfinite(rep.c_estimate)
        assert rep.ratios.max() / rep.ratios.min() < 1.2

    def test_small_grid_rejected(self, additive1d, model1d):
        f = gaussian_bump([0.0], 0.5)
        cfg = flow.SimConfig(n_paths=100, seed=5, record_jacobians=False)
        with pytest.raises(ConfigError):
            reversal.l1_bound_check(additive1d, model1d, cfg, f,
                                    [np.linspace(-0.5, 0.5, 11)],
                                    t_list=[1.0])
