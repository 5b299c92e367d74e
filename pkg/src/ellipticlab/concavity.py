"""Sampled concavity diagnostics for nodal fields.

Two independent lenses are combined: least-squares Hessians of a transformed
field at nodes away from the boundary, and the concavity function
μv(x) + (1−μ)v(y) − v(μx + (1−μ)y) evaluated on random segments.  Level-set
convexity (quasi-concavity) is measured separately by exact P1 clipping.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .domain import Mesh

MU_GRID = np.round(np.arange(1, 10) / 10.0, 1)
N_PAIRS = 2000
D0_FACTOR = 3.0
HESS_FACTOR = 5.0
CF_FACTOR = 1e-3
RESID_FACTOR = 10.0


# -------------------------------------------------------------- transforms


@dataclass(frozen=True)
class Transform:
    """``log``, ``identity``, ``power`` (s ↦ s^q) or ``neglogpow`` (s ↦ −(−log s)^q)."""

    kind: str = "log"
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("log", "identity", "power", "neglogpow"):
            raise ValueError(f"unknown transform {self.kind!r}")
        if self.kind in ("power", "neglogpow") and not (self.q and self.q > 0):
            raise ValueError(f"{self.kind} needs q > 0")

    @classmethod
    def parse(cls, text: str) -> "Transform":
        name, _, arg = text.strip().lower().partition(":")
        if name in ("pow", "power"):
            return cls("power", _ratio(arg))
        if name == "neglogpow":
            return cls("neglogpow", _ratio(arg))
        return cls(name)

    def __str__(self) -> str:
        return self.kind if self.q is None else f"{self.kind}:{self.q!r}"

    def __call__(self, u) -> np.ndarray:
        """Transformed values; NaN where the transform is undefined."""
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            return u.copy()
        pos = u > 0
        safe = np.where(pos, u, 1.0)
        if self.kind == "log":
            out = np.log(safe)
        elif self.kind == "power":
            out = safe ** self.q
        else:
            out = -np.abs(np.log(safe)) ** self.q
        return np.where(pos, out, np.nan)


def _ratio(text: str) -> float:
    num, _, den = text.partition("/")
    return float(num) / float(den) if den else float(num)


# ------------------------------------------------------------ Hessian fits


def admissible_nodes(mesh: Mesh, d0: float) -> np.ndarray:
    return np.nonzero(~mesh.boundary_mask & (mesh.node_boundary_distance >= d0 * (1 - 1e-12)))[0]


@dataclass(eq=False)
class HessianField:
    nodes: np.ndarray
    hess: np.ndarray
    resid: np.ndarray
    n_dropped: int

    @property
    def max_eig(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.hess)[:, -1]

    @property
    def norm(self) -> np.ndarray:
        return np.abs(np.linalg.eigvalsh(self.hess)).max(axis=1)


def two_ring(mesh: Mesh, centers) -> tuple[np.ndarray, np.ndarray]:
    a = mesh.adjacency + sp.identity(mesh.n_nodes, format="csr")
    a2 = (a @ a).tocsr()[centers]
    a2.sort_indices()
    return a2.indptr.astype(np.int64), a2.indices.astype(np.int64)


def hessian_field(mesh: Mesh, u, transform: Transform | str = "log",
                  d0: float | None = None) -> HessianField:
    """Per-node Hessians of the transformed field at nodes at least ``d0`` from ∂Ω.

    Nodes with a degenerate neighbourhood, or whose fit residual exceeds
    10·h²·(local value scale), are dropped and counted.
    """
    tr = Transform.parse(transform) if isinstance(transform, str) else transform
    d0 = D0_FACTOR * mesh.h if d0 is None else d0
    v = tr(u)
    centers = admissible_nodes(mesh, d0)
    centers = centers[np.isfinite(v[centers])]
    ptr, idx = two_ring(mesh, centers)
    keep = np.isfinite(v[idx])
    counts = np.add.reduceat(keep.astype(np.int64), ptr[:-1]) if centers.size else np.zeros(0, int)
    idx = idx[keep]
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    vv = np.where(np.isfinite(v), v, 0.0)
    hess, resid, ok = kernels.quadratic_fit_hessians(mesh.nodes, vv, centers, ptr, idx)
    if centers.size:
        seg_max = np.maximum.reduceat(vv[idx], ptr[:-1])
        seg_min = np.minimum.reduceat(vv[idx], ptr[:-1])
        seg_abs = np.maximum.reduceat(np.abs(vv[idx]), ptr[:-1])
        scale = np.maximum(seg_abs, seg_max - seg_min)
        ok &= resid <= RESID_FACTOR * mesh.h ** 2 * scale
    return HessianField(centers[ok], hess[ok], resid[ok], int((~ok).sum()))


# -------------------------------------------------------- concavity function


def _sample_points(mesh: Mesh, d0: float, n: int, rng) -> np.ndarray:
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    out = []
    have = 0
    while have < n:
        pts = lo + (hi - lo) * rng.random((max(4 * (n - have), 64), mesh.dim))
        pts = pts[mesh.locate(pts)[0] >= 0]
        pts = pts[mesh.boundary_distance(pts) >= d0]
        out.append(pts)
        have += len(pts)
    return np.concatenate(out)[:n]


@dataclass(frozen=True)
class ScanResult:
    worst: float
    x: tuple
    y: tuple
    mu: float
    n_pairs: int
    n_resampled: int


def concavity_function_scan(mesh: Mesh, v, n_pairs: int = N_PAIRS, mu_grid=MU_GRID,
                            seed: int = 0, d0: float | None = None) -> ScanResult:
    """Worst sampled μv(x)+(1−μ)v(y) − v(μx+(1−μ)y) over seeded random pairs.

    ``v`` is interpolated piecewise-linearly.  Pairs whose segment leaves the
    admissible region (or meets undefined values) are redrawn.
    """
    d0 = D0_FACTOR * mesh.h if d0 is None else d0
    v = np.asarray(v, dtype=float)
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu_grid, dtype=float)
    xs, ys = [], []
    redrawn = 0
    need = n_pairs
    while need > 0:
        x = _sample_points(mesh, d0, need, rng)
        y = _sample_points(mesh, d0, need, rng)
        z = mu[None, :, None] * x[:, None, :] + (1 - mu)[None, :, None] * y[:, None, :]
        zf = z.reshape(-1, mesh.dim)
        good = (mesh.boundary_distance(zf) >= d0 * (1 - 1e-9)).reshape(need, mu.size).all(axis=1)
        fx, fy = mesh.interpolate(v, x), mesh.interpolate(v, y)
        fz = mesh.interpolate(v, zf).reshape(need, mu.size)
        good &= np.isfinite(fx) & np.isfinite(fy) & np.isfinite(fz).all(axis=1)
        xs.append(x[good])
        ys.append(y[good])
        redrawn += int((~good).sum())
        need -= int(good.sum())
    x, y = np.concatenate(xs), np.concatenate(ys)
    z = mu[None, :, None] * x[:, None, :] + (1 - mu)[None, :, None] * y[:, None, :]
    fx, fy = mesh.interpolate(v, x), mesh.interpolate(v, y)
    fz = mesh.interpolate(v, z.reshape(-1, mesh.dim)).reshape(len(x), mu.size)
    c = mu[None, :] * fx[:, None] + (1 - mu)[None, :] * fy[:, None] - fz
    k = int(np.argmax(c))
    i, j = divmod(k, mu.size)
    return ScanResult(float(c.flat[k]), tuple(x[i].tolist()), tuple(y[i].tolist()),
                      float(mu[j]), len(x), redrawn)


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class ConcavityReport:
    transform: str
    d0: float
    hess_max_eig: float
    rho: float
    hess_excess: float
    cf_worst: float
    tol_C: float
    n_admissible_nodes: int
    n_dropped_nodes: int
    levels_checked: int = 0
    qc_deficit: float | None = None

    @property
    def hessian_concave(self) -> bool:
        return self.hess_excess <= 0

    @property
    def scan_concave(self) -> bool:
        return self.cf_worst <= self.tol_C

    @property
    def concave(self) -> bool:
        return self.hessian_concave and self.scan_concave

    def to_dict(self) -> dict:
        d = asdict(self)
        d["concave"] = self.concave
        return d


def concavity_report(mesh: Mesh, u, transform: Transform | str = "log", d0: float | None = None,
                     n_pairs: int = N_PAIRS, seed: int = 0) -> ConcavityReport:
    """Hessian and concavity-function evidence for the transformed field.

    A node passes when its largest Hessian eigenvalue is at most 5h times the
    Hessian's own magnitude; ``hess_excess`` is the worst margin over nodes.
    The scan passes when its worst value is at most 1e-3 times the oscillation
    of the transformed field over the admissible nodes.
    """
    tr = Transform.parse(transform) if isinstance(transform, str) else transform
    d0 = D0_FACTOR * mesh.h if d0 is None else d0
    hf = hessian_field(mesh, u, tr, d0)
    if hf.nodes.size == 0:
        raise ValueError("no admissible nodes; reduce d0 or refine the mesh")
    lam = hf.max_eig
    hmax = float(lam.max())
    excess = float(np.max(lam - HESS_FACTOR * mesh.h * hf.norm))
    v = tr(u)
    adm = admissible_nodes(mesh, d0)
    va = v[adm][np.isfinite(v[adm])]
    tol_c = CF_FACTOR * float(va.max() - va.min())
    scan = concavity_function_scan(mesh, v, n_pairs=n_pairs, seed=seed, d0=d0)
    return ConcavityReport(str(tr), float(d0), hmax, max(-hmax, 0.0), excess, scan.worst, tol_c,
                           int(hf.nodes.size + hf.n_dropped), hf.n_dropped)


def log_concavity_report(mesh: Mesh, u, d0: float | None = None, n_pairs: int = N_PAIRS,
                         seed: int = 0) -> ConcavityReport:
    return concavity_report(mesh, u, Transform("log"), d0, n_pairs, seed)


def power_concavity(mesh: Mesh, u, q: float, d0: float | None = None, n_pairs: int = N_PAIRS,
                    seed: int = 0) -> ConcavityReport:
    return concavity_report(mesh, u, Transform("power", q), d0, n_pairs, seed)


# --------------------------------------------------------- quasi-concavity


@dataclass(frozen=True)
class QuasiConcavity:
    levels: tuple
    deficits: tuple

    @property
    def worst(self) -> float:
        return max(self.deficits) if self.deficits else 0.0

    @property
    def levels_checked(self) -> int:
        return len(self.deficits)


def _superlevel_area(mesh: Mesh, u, lam) -> float:
    a = np.asarray(u)[mesh.cells] - lam
    above = a > 0
    n_above = above.sum(axis=1)
    frac = (n_above == mesh.cells.shape[1]).astype(float)
    if mesh.dim == 1:
        one = n_above == 1
        ai = np.where(above, a, 0).sum(axis=1)
        aj = np.where(~above, a, 0).sum(axis=1)
        frac[one] = ai[one] / (ai[one] - aj[one])
        return float(frac @ mesh.cell_measures)
    order = np.argsort(~above, axis=1, kind="stable")
    s = np.take_along_axis(a, order, axis=1)
    one = n_above == 1
    frac[one] = (s[one, 0] / (s[one, 0] - s[one, 1])) * (s[one, 0] / (s[one, 0] - s[one, 2]))
    two = n_above == 2
    frac[two] = 1.0 - (s[two, 2] / (s[two, 2] - s[two, 0])) * (s[two, 2] / (s[two, 2] - s[two, 1]))
    return float(frac @ mesh.cell_measures)


def _superlevel_hull(mesh: Mesh, u, lam) -> float:
    u = np.asarray(u)
    inside = mesh.nodes[u > lam]
    k = mesh.cells.shape[1]
    e = np.concatenate([mesh.cells[:, [i, (i + 1) % k]] for i in range(k if k > 2 else 1)])
    e = np.unique(np.sort(e, axis=1), axis=0)
    ua, ub = u[e[:, 0]] - lam, u[e[:, 1]] - lam
    cross = (ua > 0) != (ub > 0)
    t = ua[cross] / (ua[cross] - ub[cross])
    pa, pb = mesh.nodes[e[cross, 0]], mesh.nodes[e[cross, 1]]
    pts = np.concatenate([inside, pa + t[:, None] * (pb - pa)])
    if mesh.dim == 1:
        return float(pts[:, 0].max() - pts[:, 0].min()) if len(pts) else 0.0
    if len(pts) < 3:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def quasi_concavity_check(mesh: Mesh, u, levels=None, quantiles=MU_GRID) -> QuasiConcavity:
    """Relative gap between each super-level set and its convex hull.

    Levels default to quantiles of the interior values.
    """
    u = np.asarray(u, dtype=float)
    if levels is None:
        levels = np.quantile(u[mesh.interior], quantiles)
    used, deficits = [], []
    for lam in np.asarray(levels, dtype=float):
        hull = _superlevel_hull(mesh, u, lam)
        if hull <= 0:
            continue
        area = _superlevel_area(mesh, u, lam)
        used.append(float(lam))
        deficits.append(max((hull - area) / hull, 0.0))
    return QuasiConcavity(tuple(used), tuple(deficits))
