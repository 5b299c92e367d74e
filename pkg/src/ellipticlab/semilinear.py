"""Positive solutions of Δu + (λ₁+ε)u = δ g(x, u, ∇u) by damped Picard iteration.

For ε, δ < 0 the iterates live between the subsolution σφ₁ and the
supersolution ψ = T_{ε/2}(δC).  For ε, δ > 0 they live in the box
[ςφ₁, β] whose constants come from sampled envelopes of ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .fem import DiscreteOperators, SpectralData
from .nonlinearity import (Nonlinearity, dyadic_ceil, dyadic_floor, envelope_sup,
                           lower_threshold, ratio_decreasing)
from .resolvent import DEFAULT_P, resolvent

SAFETY = 1.1
TOL = 1e-10
MAXITER = 10_000
BOX_TOL = 1e-8
ESCAPE_TOL = 1e-3


class IterationCapError(RuntimeError):
    """Picard iteration hit its cap before the update fell below tolerance."""


class BoxEscapeError(RuntimeError):
    """An iterate left the confinement box by more than the clamp tolerance."""

    def __init__(self, msg, breach, iteration):
        super().__init__(msg)
        self.breach = breach
        self.iteration = iteration


class BracketError(ValueError):
    """The root equation does not change sign on the search bracket."""


@dataclass(frozen=True)
class ProblemParams:
    eps: float
    delta: float
    A: float = 1.0

    def __post_init__(self):
        if self.A < 1:
            raise ValueError(f"A must be >= 1, got {self.A}")
        if np.sign(self.eps) != np.sign(self.delta):
            raise ValueError(f"eps={self.eps} and delta={self.delta} must share a sign")

    def in_band(self) -> bool:
        return self.eps / self.A <= self.delta <= self.A * self.eps


def gradient_reconstruct(mesh, u) -> np.ndarray:
    """Per-node gradients: cell gradients averaged with cell-measure weights.

    Returns shape (n_nodes, dim).
    """
    u = np.asarray(u, dtype=float)
    if mesh.dim == 1:
        x = mesh.nodes[:, 0]
        i, j = mesh.cells[:, 0], mesh.cells[:, 1]
        length = np.abs(x[j] - x[i])
        slope = (u[j] - u[i]) / (x[j] - x[i])
        num = np.bincount(i, length * slope, mesh.n_nodes) + np.bincount(j, length * slope, mesh.n_nodes)
        den = np.bincount(i, length, mesh.n_nodes) + np.bincount(j, length, mesh.n_nodes)
        return (num / den)[:, None]
    return kernels.nodal_gradients(mesh.nodes, mesh.cells, u)


def _evaluate(g: Nonlinearity, mesh, v):
    grad = gradient_reconstruct(mesh, v) if g.gradient_dependent else None
    return g(v, grad, mesh.nodes)


def identity_residual(ops: DiscreteOperators, spectral: SpectralData, u, g: Nonlinearity,
                      eps: float, delta: float) -> float:
    """|ε ∫uφ₁ − δ ∫g(·,u,∇u)φ₁| with the consistent mass pairing."""
    if eps == 0 and delta == 0:
        return 0.0
    Mphi = ops.M_full @ spectral.phi1
    gu = _evaluate(g, ops.mesh, u)
    return float(abs(eps * (Mphi @ u) - delta * (Mphi @ gu)))


def theta(ops: DiscreteOperators, spectral: SpectralData, u) -> float:
    return ops.inner(u, spectral.phi1) / spectral.l2_norm_sq


# ---------------------------------------------------------------- constants


@dataclass(frozen=True, eq=False)
class NegativeConstants:
    C: float
    C_envelope: float
    s0: float
    psi: np.ndarray = field(repr=False)
    sigma: float

    def as_dict(self):
        return {"C": self.C, "C_envelope": self.C_envelope, "s0": self.s0, "sigma": self.sigma}


def build_constants_negative(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                             eps: float, delta: float, safety: float = SAFETY) -> NegativeConstants:
    if not (eps < 0 and delta < 0):
        raise ValueError("the negative-case constants need eps < 0 and delta < 0")
    ratio = abs(eps) / abs(delta)
    C_env = envelope_sup(g, ratio / 2)
    C = safety * max(C_env, 0.0)
    s0 = lower_threshold(g, ratio)
    psi = resolvent(ops, spectral, eps / 2, np.full(ops.mesh.n_nodes, delta * C))
    interior = ops.mesh.interior
    if np.any(psi[interior] <= 0):
        raise ValueError("the supersolution ψ is not positive in the interior")
    sigma_max = min(s0 / spectral.sup_norm, float(np.min(psi[interior] / spectral.phi1[interior])))
    return NegativeConstants(C, C_env, s0, psi, dyadic_floor(sigma_max))


@dataclass(frozen=True)
class PositiveConstants:
    Cp: float
    Cp_envelope: float
    s0p: float
    beta: float
    varsigma: float
    M: float
    eps0: float
    p: float
    A: float

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("Cp", "Cp_envelope", "s0p", "beta", "varsigma", "M", "eps0", "p", "A")}


def build_constants_positive(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                             A: float = 1.0, p: float = DEFAULT_P,
                             safety: float = SAFETY) -> PositiveConstants:
    if A < 1:
        raise ValueError(f"A must be >= 1, got {A}")
    l1, sup = spectral.l1_norm, spectral.sup_norm
    slope = 1.0 / (4 * A * l1 * sup)
    Cp_env = envelope_sup(g, slope)
    Cp = safety * max(Cp_env, 0.0)
    s0p = lower_threshold(g, 2 * A)

    def beta_ok(beta):
        return A * Cp * l1 + beta / (4 * sup) <= beta / (2 * sup)

    beta = dyadic_ceil(max(4 * A * Cp * l1 * sup, 1e-300))
    while not beta_ok(beta):
        beta *= 2
    varsigma = dyadic_floor(min(s0p, beta / 4) / sup)
    area = float(ops.M_full.sum())
    M = (Cp + beta * slope) * area ** (1.0 / p)
    eps0 = min(spectral.gap, 1.0 / A)
    return PositiveConstants(Cp, Cp_env, s0p, beta, varsigma, M, eps0, p, A)


# ------------------------------------------------------------------ solving


@dataclass(eq=False)
class SolveReport:
    u: np.ndarray = field(repr=False)
    iterations: int
    update_norm: float
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    box_violation: float
    identity_residual: float
    theta: float
    fixed_point_residual: float
    omega: float
    eps: float
    delta: float
    sign: int
    constants: dict
    trace: list = field(default_factory=list, repr=False)
    monotone: bool | None = None

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.u)))

    def checks(self, spectral: SpectralData) -> dict:
        interior = spectral.ops.mesh.interior
        scale = self.sup_norm
        return {
            "positive": bool(np.all(self.u[interior] > 0)),
            "box": self.box_violation <= BOX_TOL * scale,
            "identity": self.identity_residual <= 1e-6 * abs(self.eps) * self.theta * spectral.l2_norm_sq,
            "fixed_point": self.fixed_point_residual <= 1e-8 * scale,
        }

    def ok(self, spectral: SpectralData) -> bool:
        return all(self.checks(spectral).values())

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "delta": self.delta, "sign": self.sign,
            "iterations": self.iterations, "update_norm": self.update_norm,
            "box_violation": self.box_violation, "identity_residual": self.identity_residual,
            "theta": self.theta, "fixed_point_residual": self.fixed_point_residual,
            "omega": self.omega, "monotone": self.monotone, "constants": self.constants,
            "u": self.u.tolist(), "lower": self.lower.tolist(), "upper": self.upper.tolist(),
        }


def _picard(ops, spectral, g, eps, delta, v0, lower, upper, omega, tol, maxiter,
            escape_tol=None, track_monotone=False):
    mesh = ops.mesh
    v = np.clip(np.asarray(v0, dtype=float), lower, upper)
    trace = []
    worst_breach = 0.0
    monotone = True if track_monotone else None
    rises = 0
    scale = float(np.max(upper))
    for it in range(1, maxiter + 1):
        Tv = resolvent(ops, spectral, eps, delta * _evaluate(g, mesh, v))
        new = (1 - omega) * v + omega * Tv
        breach = float(max(np.max(lower - new), np.max(new - upper), 0.0))
        worst_breach = max(worst_breach, breach)
        if escape_tol is not None and breach > escape_tol * scale:
            raise BoxEscapeError(
                f"iterate {it} left the box by {breach:.3e} (box height {scale:.3e})", breach, it)
        new = np.clip(new, lower, upper)
        if track_monotone and np.any(new > v + 1e-13 * scale):
            monotone = False
        step = float(np.max(np.abs(new - v)))
        trace.append(step)
        v = new
        if step <= tol * float(np.max(np.abs(v))):
            return v, it, step, omega, trace, monotone, worst_breach
        if len(trace) >= 2 and trace[-1] > trace[-2]:
            rises += 1
            if rises >= 2:
                omega *= 0.5
                rises = 0
        else:
            rises = 0
    raise IterationCapError(f"no convergence in {maxiter} iterations (last update {trace[-1]:.3e})")


def _report(ops, spectral, g, eps, delta, u, it, step, omega, trace, monotone, lower, upper,
            sign, constants):
    Tu = resolvent(ops, spectral, eps, delta * _evaluate(g, ops.mesh, u))
    violation = float(max(np.max(lower - u), np.max(u - upper), np.max(lower - Tu),
                          np.max(Tu - upper), 0.0))
    return SolveReport(
        u=u, iterations=it, update_norm=step, lower=lower, upper=upper,
        box_violation=violation,
        identity_residual=identity_residual(ops, spectral, u, g, eps, delta),
        theta=theta(ops, spectral, u),
        fixed_point_residual=float(np.max(np.abs(u - Tu))),
        omega=omega, eps=eps, delta=delta, sign=sign, constants=constants,
        trace=trace, monotone=monotone)


def solve_negative(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                   eps: float, delta: float, constants: NegativeConstants | None = None,
                   omega: float = 0.5, start: str = "upper", tol: float = TOL,
                   maxiter: int = MAXITER) -> SolveReport:
    """Iterate from ψ (``start='upper'``) or from σφ₁ (``start='lower'``)."""
    ProblemParams(eps, delta)
    if not eps < 0:
        raise ValueError("solve_negative needs eps < 0")
    c = constants or build_constants_negative(ops, spectral, g, eps, delta)
    lower = c.sigma * spectral.phi1
    upper = c.psi
    v0 = upper if start == "upper" else lower
    track = start == "upper" and omega == 1.0 and not g.gradient_dependent
    out = _picard(ops, spectral, g, eps, delta, v0, lower, upper, omega, tol, maxiter,
                  track_monotone=track)
    return _report(ops, spectral, g, eps, delta, *out[:6], lower, upper, -1, c.as_dict())


def solve_positive(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                   eps: float, delta: float, A: float = 1.0,
                   constants: PositiveConstants | None = None, omega: float = 0.5,
                   tol: float = TOL, maxiter: int = MAXITER, enforce: bool = True,
                   escape_tol: float = ESCAPE_TOL) -> SolveReport:
    """Iterate from ςφ₁ inside [ςφ₁, β].

    With ``enforce=False`` the (ε, δ) preconditions are not checked, which is
    how the negative controls probe the regime outside the theorem.
    """
    params = ProblemParams(eps, delta, A)
    c = constants or build_constants_positive(ops, spectral, g, A)
    if enforce:
        if not (0 < eps <= c.eps0):
            raise ValueError(f"eps={eps} outside (0, eps0={c.eps0:.6g}]")
        if not params.in_band():
            raise ValueError(f"delta={delta} outside [eps/A, A*eps]")
    lower = c.varsigma * spectral.phi1
    upper = np.full(ops.mesh.n_nodes, c.beta)
    upper[ops.mesh.boundary_mask] = 0.0
    out = _picard(ops, spectral, g, eps, delta, lower, lower, upper, omega, tol, maxiter,
                  escape_tol=escape_tol)
    return _report(ops, spectral, g, eps, delta, *out[:6], lower, upper, 1, c.as_dict())


def empirical_eps0(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                   A: float = 1.0, c: float = 1.0, constants: PositiveConstants | None = None,
                   max_halvings: int = 30):
    """Halve ε₀ from its a-priori value until the positive solve stays confined.

    Returns (eps0, report at that eps0, list of rejected values).
    """
    k = constants or build_constants_positive(ops, spectral, g, A)
    eps = k.eps0
    rejected = []
    for _ in range(max_halvings):
        try:
            rep = solve_positive(ops, spectral, g, eps, c * eps, A, constants=k)
            if rep.ok(spectral):
                return eps, rep, rejected
        except (BoxEscapeError, IterationCapError):
            pass
        rejected.append(eps)
        eps *= 0.5
    raise RuntimeError(f"no confined solve found down to eps={eps:.3e}")


# ------------------------------------------------------------ limit profile


def limit_coefficient(ops: DiscreteOperators, spectral: SpectralData, g: Nonlinearity,
                      c: float, lo: float = 1e-8, hi: float = 1e8) -> float:
    """B > 0 with B‖φ₁‖² = c∫g(Bφ₁)φ₁, found by bisection in log B."""
    if g.gradient_dependent:
        raise ValueError("the limit coefficient needs g independent of the gradient")
    if not ratio_decreasing(g):
        raise ValueError(f"s -> g(s)/s is not decreasing for {g}")
    if c <= 0:
        raise ValueError("c must be positive")
    phi = spectral.phi1
    Mphi = ops.M_full @ phi
    norm2 = spectral.l2_norm_sq

    def F(logB):
        B = math.exp(logB)
        return c * (Mphi @ g(B * phi)) / B - norm2

    a, b = math.log(lo), math.log(hi)
    fa, fb = F(a), F(b)
    if not (fa > 0 > fb):
        raise BracketError(f"no sign change on [{lo:g}, {hi:g}]: F={fa:.3e}, {fb:.3e}")
    logB = optimize.bisect(F, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=400)
    B = math.exp(logB)
    res = abs(B * norm2 - c * (Mphi @ g(B * phi)))
    if res > 1e-10 * max(1.0, B * norm2):
        raise BracketError(f"bisection residual {res:.3e} too large")
    return B
