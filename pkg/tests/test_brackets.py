import dataclasses

import numpy as np
import pytest

from levylab import brackets, coeffs
from levylab.errors import ConfigError


GRID2 = brackets.GridSpec(lo=(-2.0, -2.0), hi=(2.0, 2.0), shape=(7, 7))


class TestChainValues:
    def test_zero_drift_kills_higher_brackets(self, additive1d):
        chain = brackets.bracket_chain(additive1d, 3)
        vals = brackets.evaluate_chain(chain, np.array([[0.4]]))
        assert vals[0][0, 0, 0] == 1.0
        assert np.abs(vals[1:]).max() == 0.0

    def test_kinetic_hand_values(self, kinetic):
        chain = brackets.bracket_chain(kinetic, 2)
        vals = brackets.evaluate_chain(chain, np.array([[0.5, -1.0]]))
        assert np.allclose(vals[0][0], [[0.0, 0.0], [0.0, 1.0]], atol=1e-12)
        assert np.allclose(vals[1][0], [[0.0, -1.0], [0.0, 0.0]], atol=1e-9)

    def test_alternating_1d(self):
        lin = coeffs.linear_drift([[1.0]])
        chain = brackets.bracket_chain(lin, 3)
        vals = brackets.evaluate_chain(chain, np.array([[0.7]]))
        assert np.allclose(vals[:, 0, 0, 0], [1.0, -1.0, 1.0], atol=1e-9)

    def test_sine1d_constant_second_bracket(self, sine1d):
        chain = brackets.bracket_chain(sine1d, 2)
        vals = brackets.evaluate_chain(chain, np.array([[0.0], [1.3], [-2.0]]))
        assert np.allclose(vals[1][:, 0, 0], 0.2, atol=1e-9)

    def test_scaling_covariance(self, kinetic):
        scaled = dataclasses.replace(
            kinetic,
            drift=lambda x: 2.0 * kinetic.drift(x),
            ddrift=lambda x: 2.0 * kinetic.ddrift(x),
        )
        xs = np.array([[0.3, -0.8]])
        base = brackets.evaluate_chain(brackets.bracket_chain(kinetic, 3), xs)
        twice = brackets.evaluate_chain(brackets.bracket_chain(scaled, 3), xs)
        for j in range(3):
            assert np.abs(twice[j] - 2.0**j * base[j]).max() < 1e-10


class TestCheckUh:
    def test_identity_system(self):
        chain = brackets.bracket_chain(coeffs.additive(2), 1)
        rep = brackets.check_uh(chain, GRID2)
        assert rep.c0 == 1.0

    def test_kinetic_depth_two(self, kinetic):
        rep = brackets.check_uh(brackets.bracket_chain(kinetic, 2), GRID2)
        assert rep.c0 == pytest.approx(1.0, abs=1e-6)

    def test_kinetic_depth_one_degenerate(self, kinetic):
        rep = brackets.check_uh(brackets.bracket_chain(kinetic, 1), GRID2)
        assert rep.c0 == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(np.abs(rep.witness_u), [1.0, 0.0], atol=1e-12)

    def test_sine1d_lower_bound(self, sine1d):
        grid = brackets.GridSpec(lo=(-3.0,), hi=(3.0,), shape=(61,))
        rep = brackets.check_uh(brackets.bracket_chain(sine1d, 2), grid)
        # min over x of (0.4 sin x)^2 + 0.04 is 0.04 at x = 0
        assert rep.c0 == pytest.approx(0.04, rel=1e-6)

    def test_empty_grid_rejected(self, kinetic):
        chain = brackets.bracket_chain(kinetic, 2)
        with pytest.raises(ConfigError):
            brackets.check_uh(chain, brackets.GridSpec((0.0,), (1.0,), (0,)))

    def test_sphere_sampling_brackets_eigensolve(self, kinetic, sine1d):
        for c, grid in ((kinetic, GRID2),
                        (sine1d, brackets.GridSpec((-3.0,), (3.0,), (31,)))):
            chain = brackets.bracket_chain(c, 2)
            xs = grid.points()
            m = brackets.spanning_matrix(chain, xs)
            lam = np.linalg.eigvalsh(m)[:, 0]
            sph = brackets.sphere_minimum(chain, xs, 512)
            assert np.all(sph >= lam - 1e-12)
            assert np.all(sph <= lam * (1 + 1e-2) + 1e-12)


class TestConventions:
    def test_gap_vanishes_in_1d(self, sine1d):
        xs = np.linspace(-2, 2, 9)[:, None]
        assert brackets.convention_gap(sine1d, 3, xs) < 1e-9

    def test_kinetic_gap_is_real(self, kinetic):
        # grad b and B_1 do not commute: the two published recursions differ
        xs = np.array([[0.3, -0.8]])
        gap = brackets.convention_gap(kinetic, 2, xs)
        assert gap == pytest.approx(1.0, abs=1e-9)

    def test_other_convention_kills_kinetic(self, kinetic):
        chain = brackets.bracket_chain(kinetic, 2, "B_NABLA_RIGHT")
        rep = brackets.check_uh(chain, GRID2)
        assert rep.c0 == pytest.approx(0.0, abs=1e-9)

    def test_unknown_convention(self, kinetic):
        with pytest.raises(ConfigError):
            brackets.bracket_chain(kinetic, 2, "SOMETHING")
