"""Shifted resolvent near the principal eigenvalue and anti-maximum-principle sweeps.

``resolvent(ops, spectral, eps, w)`` solves ``Δv + (λ₁+ε)v = w`` with zero
boundary values.  Sweeps measure the extremal ratios ``v/φ₁`` over families
of loads whose φ₁-moment is pinned to ``[εa, εb]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fem import DiscreteOperators, SpectralData

RESONANCE_GUARD = 1e-8
DEFAULT_P = 4.0


class ResonanceError(ValueError):
    """λ₁+ε sits on (or within the guard of) a computed eigenvalue."""


def resolvent(ops: DiscreteOperators, spectral: SpectralData, eps: float, w) -> np.ndarray:
    shift = spectral.lambda1 + eps
    dist = min(abs(eps), abs(shift - spectral.lambda2))
    if dist < RESONANCE_GUARD * spectral.lambda1:
        raise ResonanceError(
            f"λ1+ε = {shift:.12g} is {dist:.3e} from the computed spectrum "
            f"(λ1={spectral.lambda1:.12g}, λ2={spectral.lambda2:.12g})")
    w = np.asarray(w, dtype=float)
    b = -ops.load(w)
    v = ops.shifted_solver(shift)(b)
    return ops.to_full(v)


def ratio_bounds(v, spectral: SpectralData) -> tuple[float, float]:
    """(inf, sup) of the nodal ratio v/φ₁ over interior nodes."""
    interior = spectral.ops.mesh.interior
    r = np.asarray(v)[interior] / spectral.phi1[interior]
    return float(r.min()), float(r.max())


# -------------------------------------------------------------------- loads


@dataclass(frozen=True)
class LoadSpec:
    """One member of a load family.

    family: ``aligned`` (w = εtφ₁), ``orth`` (w = εtφ₁ + sφ₂), ``bump``
    (compact bump rescaled so ∫wφ₁ = εt), ``sign`` (w = εtφ₁ + s q with q a
    fixed sign-changing field, M-orthogonal to φ₁ and of unit L² norm).
    """

    family: str
    t: float
    s: float = 0.0
    center: tuple = (0.5, 0.5)
    radius: float = 0.2
    amp: float = 1.0


@dataclass(frozen=True)
class Load:
    spec: LoadSpec
    eps: float
    w: np.ndarray = field(repr=False)
    int_wphi: float
    l1: float
    lp: float
    p: float


def _quad_points(mesh):
    """Per-cell 3-point rule: edge midpoints on triangles, Gauss on segments."""
    if mesh.dim == 1:
        g = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
        wts = np.array([5.0, 8.0, 5.0]) / 18.0
        lam = 0.5 * (1 + g)
        bary = np.stack([1 - lam, lam], axis=1)
        return bary, wts
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    return bary, np.full(3, 1.0 / 3.0)


def lp_norm(mesh, w, p: float) -> float:
    """L^p norm of the P1 interpolant by the per-cell 3-point rule."""
    bary, wts = _quad_points(mesh)
    vals = np.asarray(w)[mesh.cells] @ bary.T
    return float((mesh.cell_measures[:, None] * wts[None] * np.abs(vals) ** p).sum() ** (1.0 / p))


def sign_changing_field(spectral: SpectralData) -> np.ndarray:
    """Deterministic sign-changing Dirichlet field, M-orthogonal to φ₁, unit L²."""
    ops = spectral.ops
    x = ops.mesh.nodes
    c = x.mean(axis=0)
    span = np.ptp(x, axis=0)
    z = (x - c) / np.where(span > 0, span, 1.0)
    q = z[:, 0] + 0.5 * (z[:, -1] ** 2) + 0.3 * np.sin(3 * z[:, 0] + 1.0)
    q = q * spectral.phi1 / spectral.sup_norm
    q = spectral.project_out(q)
    return q / math.sqrt(ops.inner(q, q))


def bump_profile(mesh, center, radius) -> np.ndarray:
    d2 = ((mesh.nodes - np.asarray(center, dtype=float)[: mesh.dim]) ** 2).sum(axis=1) / radius ** 2
    return np.where(d2 < 1.0, (1.0 - d2) ** 2, 0.0)


def make_load(spec: LoadSpec, eps: float, spectral: SpectralData, p: float = DEFAULT_P) -> Load:
    """Build a load field and certify ∫wφ₁, ‖w‖₁ and ‖w‖_p."""
    ops = spectral.ops
    mesh = ops.mesh
    phi1 = spectral.phi1
    if spec.family == "aligned":
        w = eps * spec.t * phi1
    elif spec.family == "orth":
        w = eps * spec.t * phi1 + spec.s * spectral.phi2
    elif spec.family == "sign":
        w = eps * spec.t * phi1 + spec.s * sign_changing_field(spectral)
    elif spec.family == "bump":
        if mesh.dim == 2:
            inside = mesh.locate(np.asarray(spec.center, dtype=float)[None])[0][0] >= 0
            clear = mesh.boundary_distance(np.asarray(spec.center, dtype=float)[None])[0] >= spec.radius
        else:
            lo, hi = mesh.nodes[:, 0].min(), mesh.nodes[:, 0].max()
            c = spec.center[0]
            inside = lo < c < hi
            clear = min(c - lo, hi - c) >= spec.radius
        if not (inside and clear):
            raise ValueError(f"bump at {spec.center} radius {spec.radius} does not fit inside the domain")
        b = spec.amp * bump_profile(mesh, spec.center, spec.radius)
        moment = ops.inner(b, phi1)
        w = eps * spec.t * b / moment
    else:
        raise ValueError(f"unknown load family {spec.family!r}")
    return Load(spec, eps, w, ops.inner(w, phi1), lp_norm(mesh, w, 1.0), lp_norm(mesh, w, p), p)


# -------------------------------------------------------------------- sweep


FAMILIES = ("aligned", "orth", "bump", "sign")


@dataclass(frozen=True)
class SweepCell:
    eps: float
    eta: float
    inf_ratio: float
    sup_ratio: float
    n_loads: int
    rows: tuple = ()

    def excess(self, a: float, b: float) -> float:
        if self.n_loads == 0:
            return math.nan
        return max(a - self.inf_ratio, self.sup_ratio - b, 0.0)


@dataclass(frozen=True)
class AmpSweepResult:
    a: float
    b: float
    p: float
    M: float
    sign: int
    cells: tuple

    def admissible(self):
        return [c for c in self.cells if c.n_loads]

    def csv_rows(self):
        for c in self.cells:
            yield from c.rows


def _family_loads(family, eps, eta, a, b, spectral, p, M, bump_center, bump_radius):
    """Candidate loads for one (ε, η) cell, filtered by the norm budget."""
    ops = spectral.ops
    mesh = ops.mesh
    ts = sorted({a, 0.5 * (a + b), b})
    out = []
    phi_l1 = lp_norm(mesh, spectral.phi1, 1.0)
    for t in ts:
        base = abs(eps) * t * phi_l1
        room = eta - base
        if family == "aligned":
            specs = [LoadSpec("aligned", t)]
        elif family in ("orth", "sign"):
            if room <= 0:
                continue
            q = spectral.phi2 if family == "orth" else sign_changing_field(spectral)
            s = room / lp_norm(mesh, q, 1.0)
            specs = [LoadSpec(family, t, s), LoadSpec(family, t, -s)]
        elif family == "bump":
            specs = [LoadSpec("bump", t, center=tuple(bump_center), radius=bump_radius)]
        else:
            raise ValueError(f"unknown load family {family!r}")
        for ls in specs:
            load = make_load(ls, eps, spectral, p)
            if load.l1 <= eta * (1 + 1e-12) and load.lp <= M:
                out.append(load)
    return out


def _run_cell(ops, spectral, families, a, b, p, M, eps, eta, bump_center, bump_radius):
    loads = []
    for fam in families:
        loads.extend(_family_loads(fam, eps, eta, a, b, spectral, p, M, bump_center, bump_radius))
    if not loads:
        return SweepCell(eps, eta, math.nan, math.nan, 0)
    lo, hi = math.inf, -math.inf
    rows = []
    for load in loads:
        v = resolvent(ops, spectral, eps, load.w)
        r_lo, r_hi = ratio_bounds(v, spectral)
        lo, hi = min(lo, r_lo), max(hi, r_hi)
        rows.append((eps, eta, load.spec.family, r_lo, r_hi, load.l1, load.lp, load.int_wphi))
    return SweepCell(eps, eta, lo, hi, len(loads), tuple(rows))


def amp_sweep(ops: DiscreteOperators, spectral: SpectralData, families=FAMILIES,
              a: float = 1.0, b: float = 2.0, p: float = DEFAULT_P, M: float = math.inf,
              eps_grid=(), eta_grid=(), sign: int = +1, pairing: str = "grid",
              bump_center=None, bump_radius: float | None = None, jobs: int = 1) -> AmpSweepResult:
    """Extremal ratios T_ε(w)/φ₁ over load families on an (ε, η) grid.

    ``sign=+1`` probes the anti-maximum regime ε ∈ (0, (λ₂-λ₁)/2), ``sign=-1``
    the maximum-principle regime ε ∈ (-λ₁, 0); ε values are passed with their
    sign.  ``pairing='diagonal'`` zips the grids instead of taking the product.
    """
    if not 0 < a <= b:
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    for eps in eps_grid:
        if sign > 0 and not 0 < eps < spectral.gap / 2:
            raise ValueError(f"ε={eps} outside (0, (λ2-λ1)/2) = (0, {spectral.gap / 2:.6g})")
        if sign < 0 and not -spectral.lambda1 < eps < 0:
            raise ValueError(f"ε={eps} outside (-λ1, 0)")
    if pairing == "diagonal":
        grid = list(zip(eps_grid, eta_grid))
    else:
        grid = [(e, n) for e in eps_grid for n in eta_grid]
    mesh = ops.mesh
    if bump_center is None:
        bump_center = mesh.nodes[int(np.argmax(spectral.phi1))]
    if bump_radius is None:
        bump_radius = 0.5 * float(mesh.boundary_distance(np.asarray(bump_center)[None])[0])
    args = [(ops, spectral, tuple(families), a, b, p, M, e, n, bump_center, bump_radius)
            for e, n in grid]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            cells = list(pool.map(lambda x: _run_cell(*x), args))
    else:
        cells = [_run_cell(*x) for x in args]
    return AmpSweepResult(a, b, p, M, sign, tuple(cells))


def band_excess_trend(result: AmpSweepResult) -> list[float]:
    """Band excess of admissible cells, in the order the cells were run."""
    return [c.excess(result.a, result.b) for c in result.admissible()]


# -------------------------------------------------------------- limit check


@dataclass(frozen=True)
class AmpLimitTable:
    eps: tuple
    deviation: tuple
    deviation_discrete: tuple
    limit: float
    discrete_limit: float
    slope: float


def amp_limit_check(ops: DiscreteOperators, spectral: SpectralData, f, eps_seq,
                    limit: float | None = None) -> AmpLimitTable:
    """sup |ε T_ε(f)/φ₁ - ∫fφ₁| along a decreasing ε sequence.

    ``limit`` is an externally known value of ∫fφ₁ (e.g. a closed form); the
    discrete moment is always reported as well, and the fitted log-log slope
    uses the discrete moment so that mesh error does not flatten it.
    """
    f = np.asarray(f, dtype=float)
    moment = ops.inner(f, spectral.phi1)
    if not moment > 0:
        raise ValueError(f"∫fφ₁ must be positive, got {moment}")
    target = moment if limit is None else float(limit)
    interior = ops.mesh.interior
    dev, dev_d = [], []
    for eps in eps_seq:
        v = resolvent(ops, spectral, eps, f)
        ratio = eps * v[interior] / spectral.phi1[interior]
        dev.append(float(np.max(np.abs(ratio - target))))
        dev_d.append(float(np.max(np.abs(ratio - moment))))
    e = np.asarray(eps_seq, dtype=float)
    d = np.asarray(dev_d)
    if len(e) >= 2 and np.all(d > 0):
        slope = float(np.polyfit(np.log(e), np.log(d), 1)[0])
    else:
        slope = math.nan
    return AmpLimitTable(tuple(map(float, e)), tuple(dev), tuple(dev_d), target, moment, slope)
