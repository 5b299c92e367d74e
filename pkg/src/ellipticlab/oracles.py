"""Independent reference values: Bessel zeros, a 1D shooting solver, quadratures."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, special


def disk_eigenvalues(r: float = 1.0) -> tuple[float, float]:
    """(λ₁, λ₂) of the Dirichlet Laplacian on a disk of radius r."""
    j01 = special.jn_zeros(0, 1)[0]
    j11 = special.jn_zeros(1, 1)[0]
    return (j01 / r) ** 2, (j11 / r) ** 2


def disk_hopf_slope(r: float = 1.0) -> float:
    """|∂_r φ₁| on the boundary of a disk for the L²-normalised φ₁."""
    j = special.jn_zeros(0, 1)[0]
    # φ₁ = J0(j r/R)/(√π R |J1(j)|), so |φ₁'(R)| = j / (√π R²)
    return j / (math.sqrt(math.pi) * r * r)


def interval_phi1(x, a: float = 0.0, b: float = math.pi):
    L = b - a
    return math.sqrt(2.0 / L) * np.sin(math.pi * (np.asarray(x) - a) / L)


def sine_power_integral(q: float) -> float:
    """∫₀^π sin(x)^q dx by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: math.sin(x) ** q, 0.0, math.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def sqrt_limit_coefficient(c: float = 1.0) -> float:
    """Root B of B = c ∫₀^π √(Bφ₁) φ₁ for φ₁ = (2/π)^{1/2} sin on (0, π).

    Rearranging gives √B = c (2/π)^{3/4} ∫ sin^{3/2}.
    """
    return (c * (2.0 / math.pi) ** 0.75 * sine_power_integral(1.5)) ** 2


class ShootingSolution:
    """Positive solution of u'' + (λ₁+ε)u = δ g(u) on (0, L), u(0)=u(L)=0."""

    def __init__(self, g, eps: float, delta: float, length: float = math.pi,
                 alpha_range=(1e-4, 1e3), rtol: float = 1e-12):
        self.g, self.eps, self.delta, self.length = g, eps, delta, length
        self.k = (math.pi / length) ** 2 + eps
        self.rtol = rtol
        grid = np.geomspace(*alpha_range, 81)
        end = np.array([self._end(a) for a in grid])
        sign = np.nonzero(np.sign(end[:-1]) != np.sign(end[1:]))[0]
        if sign.size == 0:
            raise ValueError("no slope bracket found for the shooting problem")
        i = int(sign[0])
        self.alpha = optimize.brentq(self._end, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15,
                                     maxiter=500)
        self._sol = self._integrate(self.alpha, dense=True)

    def _rhs(self, x, y):
        u, du = y
        return [du, -self.k * u + self.delta * self.g(max(u, 0.0))]

    def _integrate(self, alpha, dense=False):
        return integrate.solve_ivp(self._rhs, (0.0, self.length), [0.0, alpha], method="DOP853",
                                   rtol=self.rtol, atol=1e-14 * max(alpha, 1e-3),
                                   dense_output=dense)

    def _end(self, alpha):
        return float(self._integrate(alpha).y[0, -1])

    def __call__(self, x) -> np.ndarray:
        return self._sol.sol(np.asarray(x, dtype=float))[0]
