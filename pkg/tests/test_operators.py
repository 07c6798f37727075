import numpy as np
import pytest
from scipy.integrate import quad

from levylab import coeffs, levy, operators
from levylab.brackets import GridSpec
from levylab.errors import ConfigError, NumericsError
from levylab.testfunctions import (SmoothFunction, constant, cos_coordinate,
                                   gaussian_bump, linear, square_coordinate)


def hard_model(alpha=1.0, radius=1.0):
    return levy.LevyModel(dim=1, alpha=alpha, delta=1.0, trunc_low=0.0,
                          cutoff=levy.HardTruncation(1.0, radius))


class TestSmallJumpOracles:
    def test_constant_function(self, additive1d):
        spec = operators.OperatorSpec("SMALL_JUMP_L0", hard_model(),
                                      additive1d)
        assert operators.apply(spec, constant(3.0), [0.2]) == 0.0

    def test_linear_function_cancels(self, additive1d):
        spec = operators.OperatorSpec("SMALL_JUMP_L0", hard_model(),
                                      additive1d)
        assert abs(operators.apply(spec, linear([2.0]), [0.2])) < 1e-12

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_quadratic_closed_form(self, additive1d, alpha):
        # p.v. int (2xz + z^2)|z|^{-1-a} dz over |z|<1 = 2/(2-a)
        spec = operators.OperatorSpec("SMALL_JUMP_L0", hard_model(alpha),
                                      additive1d)
        val = operators.apply(spec, square_coordinate(0), [0.7])
        assert val == pytest.approx(2.0 / (2.0 - alpha), abs=1e-8)

    def test_pv_cut_halving(self, additive1d):
        f = square_coordinate(0)
        a = operators.apply(
            operators.OperatorSpec("SMALL_JUMP_L0", hard_model(),
                                   additive1d), f, [0.7])
        b = operators.apply(
            operators.OperatorSpec("SMALL_JUMP_L0", hard_model(),
                                   additive1d, pv_inner_cut=0.125), f, [0.7])
        assert abs(a - b) < 1e-8

    def test_cos_symbol_oracle(self, additive1d):
        m = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.0)
        chi = m.cutoff.chi
        psi = 2 * quad(lambda r: (1 - np.cos(r)) * chi(r) * r**-2.0,
                       0.0, 1.0, points=[0.5], epsrel=1e-13)[0]
        spec = operators.OperatorSpec("SMALL_JUMP_L0", m, additive1d)
        val = operators.apply(spec, cos_coordinate(0), [0.3])
        assert val == pytest.approx(-psi * np.cos(0.3), abs=1e-10)

    def test_drift_term(self):
        c = coeffs.linear_drift([[0.5]])
        m = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.4,
                           cutoff=levy.HardTruncation(1.0, 0.4))
        # empty jump shell: the operator reduces to b . grad f
        spec = operators.OperatorSpec("SMALL_JUMP_L0", m, c,
                                      pv_inner_cut=0.1)
        val = operators.apply(spec, square_coordinate(0), [0.7])
        assert val == pytest.approx(0.5 * 0.7 * 2 * 0.7, rel=1e-12)

    def test_respects_truncation(self, additive1d):
        for tr in (0.0, 0.1):
            m = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=tr,
                               cutoff=levy.HardTruncation(1.0, 1.0))
            spec = operators.OperatorSpec("SMALL_JUMP_L0", m, additive1d)
            val = operators.apply(spec, square_coordinate(0), [0.0])
            assert val == pytest.approx(2.0 * (1.0 - tr), abs=1e-8)


class TestPrincipalValueGuard:
    def test_even_singular_part_detected(self, additive1d):
        bad = coeffs.CoefficientSet(
            dim=1, name="bad",
            sigma=lambda x, z: 0.3 * np.abs(z),
            drift=additive1d.drift,
            dsigma_dx=additive1d.dsigma_dx,
            dsigma_dz=additive1d.dsigma_dz,
            ddrift=additive1d.ddrift,
            drift_is_zero=True, dsigma_dx_is_zero=True,
        )
        m = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.0)
        spec = operators.OperatorSpec("SMALL_JUMP_L0", m, bad)
        with pytest.raises(NumericsError):
            operators.apply(spec, cos_coordinate(0), [0.3])


class TestLinearityAndStructure:
    def test_linearity(self, additive1d):
        m = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.0)
        spec = operators.OperatorSpec("SMALL_JUMP_L0", m, additive1d)
        f1 = cos_coordinate(0)
        f2 = gaussian_bump([0.3], 0.7)
        comb = SmoothFunction(
            "comb",
            lambda x: 2.0 * f1.fn(x) - 3.0 * f2.fn(x),
            lambda x: 2.0 * f1.grad(x) - 3.0 * f2.grad(x),
            lambda x: 2.0 * f1.hess(x) - 3.0 * f2.hess(x))
        x = np.array([0.4])
        v1 = operators.apply(spec, f1, x)
        v2 = operators.apply(spec, f2, x)
        vc = operators.apply(spec, comb, x)
        scale = 2 * abs(v1) + 3 * abs(v2) + 1.0
        assert abs(vc - (2 * v1 - 3 * v2)) < 1e-12 * scale

    def test_full_is_sum_on_same_nodes(self, kinetic):
        m = levy.LevyModel(dim=2, alpha=0.5, delta=1.0, trunc_low=0.0)
        f = gaussian_bump([0.0, 0.0], 1.0)
        x = np.array([0.3, -0.2])
        s = operators.apply(operators.OperatorSpec("SMALL_JUMP_L0", m,
                                                   kinetic), f, x)
        b = operators.apply(operators.OperatorSpec("BIG_JUMP_SCRIPT_L", m,
                                                   kinetic), f, x)
        fu = operators.apply(operators.OperatorSpec("FULL", m, kinetic),
                             f, x)
        assert fu == s + b

    def test_big_jump_needs_linear_coupling(self, model1d):
        c = coeffs.asym1d()
        spec = operators.OperatorSpec("BIG_JUMP_SCRIPT_L", model1d, c)
        with pytest.raises(ConfigError):
            operators.apply(spec, cos_coordinate(0), [0.0])

    def test_bad_kind(self, additive1d, model1d):
        with pytest.raises(ConfigError):
            operators.OperatorSpec("WHATEVER", model1d, additive1d)

    def test_pv_cut_validation(self, additive1d, model1d):
        with pytest.raises(ConfigError):
            operators.OperatorSpec("SMALL_JUMP_L0", model1d, additive1d,
                                   pv_inner_cut=0.3)


class TestBigJumpProbe:
    def test_zero_function(self, kinetic):
        m = levy.LevyModel(dim=2, alpha=0.5, delta=1.0, trunc_low=0.0)
        spec = operators.OperatorSpec("BIG_JUMP_SCRIPT_L", m, kinetic,
                                      n_sphere=16)
        zero = SmoothFunction("zero", lambda x: np.zeros(x.shape[:-1]))
        grid = GridSpec(lo=(-1.0, -1.0), hi=(1.0, 1.0), shape=(5, 5))
        probe = operators.boundedness_probe(spec, [zero], 2.0, grid)
        assert probe.ratios["zero"] == 0.0

    def test_translation_covariance(self, kinetic):
        m = levy.LevyModel(dim=2, alpha=0.5, delta=1.0, trunc_low=0.0)
        spec = operators.OperatorSpec("BIG_JUMP_SCRIPT_L", m, kinetic)
        shift = np.array([0.7, -0.4])
        a = operators.apply(spec, gaussian_bump([0.0, 0.0], 1.0),
                            np.array([0.3, -0.2]))
        b = operators.apply(spec, gaussian_bump(shift, 1.0),
                            np.array([0.3, -0.2]) + shift)
        assert abs(a - b) < 1e-10

    def test_bump_family_stability(self, kinetic):
        m = levy.LevyModel(dim=2, alpha=0.5, delta=1.0, trunc_low=0.0)
        spec = operators.OperatorSpec("BIG_JUMP_SCRIPT_L", m, kinetic,
                                      n_sphere=16, n_panels=8)
        grid = GridSpec(lo=(-2.0, -2.0), hi=(2.0, 2.0), shape=(9, 9))
        fams = [gaussian_bump([0.0, 0.0], w) for w in (0.5, 1.0, 2.0)]
        probe = operators.boundedness_probe(spec, fams, 2.0, grid)
        assert np.isfinite(probe.max_ratio) and probe.max_ratio > 0
        assert probe.spread < 2.0
