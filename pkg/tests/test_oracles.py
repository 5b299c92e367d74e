import math

import mpmath
import numpy as np
import pytest

from conftest import B_SQRT, DISK_HOPF, J01_SQ, J11_SQ, SINE_3_2
from ellipticlab import oracles
from ellipticlab.nonlinearity import Nonlinearity


def test_sine_power_integral_matches_gamma_form():
    assert oracles.sine_power_integral(1.5) == pytest.approx(SINE_3_2, rel=1e-12)
    assert oracles.sine_power_integral(1.0) == pytest.approx(2.0, rel=1e-13)
    assert oracles.sine_power_integral(2.0) == pytest.approx(math.pi / 2, rel=1e-13)


def test_frozen_constants_against_mpmath():
    mpmath.mp.dps = 30
    j01, j11 = mpmath.besseljzero(0, 1), mpmath.besseljzero(1, 1)
    assert float(j01 ** 2) == pytest.approx(J01_SQ, rel=1e-15)
    assert float(j11 ** 2) == pytest.approx(J11_SQ, rel=1e-15)
    assert float(j01 / mpmath.sqrt(mpmath.pi)) == pytest.approx(DISK_HOPF, rel=1e-15)
    s32 = mpmath.sqrt(mpmath.pi) * mpmath.gamma(1.25) / mpmath.gamma(1.75)
    assert float(s32) == pytest.approx(SINE_3_2, rel=1e-15)
    b = ((2 / mpmath.pi) ** mpmath.mpf(0.75) * s32) ** 2
    assert float(b) == pytest.approx(B_SQRT, rel=1e-15)


def test_limit_coefficient_oracle():
    assert oracles.sqrt_limit_coefficient(1.0) == pytest.approx(B_SQRT, rel=1e-12)
    assert oracles.sqrt_limit_coefficient(4.0) == pytest.approx(16 * B_SQRT, rel=1e-12)


def test_interval_phi1_normalised():
    x = np.linspace(0, math.pi, 20001)
    assert np.trapezoid(oracles.interval_phi1(x) ** 2, x) == pytest.approx(1.0, rel=1e-7)


def test_shooting_constant_source_closed_form():
    g = Nonlinearity("bounded", (1.0, 0.0))
    sol = oracles.ShootingSolution(g, -0.5, -0.5)
    k = math.sqrt(0.5)
    x = np.linspace(0, math.pi, 11)
    exact = -0.5 / (k * k) * (1 - np.cos(k * x) - (1 - math.cos(k * math.pi)) / math.sin(k * math.pi) * np.sin(k * x))
    np.testing.assert_allclose(sol(x), exact, atol=1e-9)


@pytest.mark.parametrize("eps", [-0.1, 0.05])
def test_shooting_profile_solves_problem(eps):
    g = Nonlinearity.power()
    sol = oracles.ShootingSolution(g, eps, eps)
    assert sol.alpha > 0
    x = np.linspace(0, math.pi, 201)
    u = sol(x)
    assert abs(u[-1]) < 1e-9 * u.max()
    assert np.all(u[1:-1] > 0)
    np.testing.assert_allclose(u, u[::-1], atol=1e-8 * u.max())


def test_shooting_reports_missing_bracket():
    with pytest.raises(ValueError, match="bracket"):
        oracles.ShootingSolution(Nonlinearity.power(), 0.05, 0.05, alpha_range=(1e3, 1e4))
