"""Config-driven experiments: each returns a table of rows plus named checks."""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import concavity as cc
from . import oracles
from . import semilinear as sl
from .domain import DomainSpec, Mesh, build_mesh, mesh_quality
from .fem import (DiscreteOperators, EigenCache, SpectralData, assemble, principal_eigenpair,
                  solve_dirichlet)
from .nonlinearity import Nonlinearity
from .resolvent import FAMILIES, amp_limit_check, amp_sweep, band_excess_trend, resolvent

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("eigen", "resolvent", "amp_sweep", "amp_limit", "solve", "convergence", "concavity",
         "negative_controls")
SQRT = "powerplus:a0=1,r=0.5,b0=0"


# -------------------------------------------------------------------- cache


@dataclass(eq=False)
class Discretization:
    mesh: Mesh
    ops: DiscreteOperators
    spectral: SpectralData


class Workspace:
    """Write-once cache of (mesh, operators, eigenpair) keyed by (domain, h).

    With ``cache_dir`` the eigenpairs are also persisted between runs.
    """

    def __init__(self, cache_dir=None):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.disk = EigenCache(cache_dir) if cache_dir else None
        self.hits = 0

    def get(self, spec: DomainSpec, h: float) -> Discretization:
        key = (spec.key, float(h))
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
            mesh = build_mesh(spec, h)
            ops = assemble(mesh)
            spectral = self.disk.load(spec.key, h, ops) if self.disk else None
            if spectral is None:
                spectral = principal_eigenpair(ops)
                if self.disk:
                    self.disk.store(spec.key, h, spectral)
            else:
                self.hits += 1
            disc = Discretization(mesh, ops, spectral)
            self._store[key] = disc
            return disc


_DEFAULT_WS = Workspace()


def _ws(ws):
    return _DEFAULT_WS if ws is None else ws


# ------------------------------------------------------------------ results


@dataclass
class ExperimentResult:
    name: str
    rows: list
    checks: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.checks = {k: bool(v) for k, v in self.checks.items()}

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            cols = list(self.rows[0])
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"name": self.name, "rows": self.rows, "checks": self.checks, "meta": self.meta,
               "ok": self.ok}
        return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, fmt: str = "csv") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if fmt == "csv":
            p = out / f"{self.name}.csv"
            p.write_text(self.to_csv())
            paths.append(p)
            s = out / f"{self.name}.checks.json"
            s.write_text(json.dumps(_plain({"checks": self.checks, "meta": self.meta,
                                            "ok": self.ok}), indent=2, sort_keys=True) + "\n")
            paths.append(s)
        elif fmt == "json":
            p = out / f"{self.name}.json"
            p.write_text(self.to_json())
            paths.append(p)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        return paths


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _order(errors, hs) -> list[float]:
    return [math.log(errors[i] / errors[i + 1]) / math.log(hs[i] / hs[i + 1])
            for i in range(len(errors) - 1)]


# ------------------------------------------------------------------- eigen


def exact_eigenvalues(spec: DomainSpec):
    """Closed-form (λ₁, λ₂) where available, else None."""
    pi2 = math.pi ** 2
    if spec.kind == "unit_square":
        return 2 * pi2, 5 * pi2
    if spec.kind == "rectangle":
        w, h = spec.params
        lam = sorted(pi2 * (m * m / w ** 2 + n * n / h ** 2) for m in (1, 2, 3) for n in (1, 2, 3))
        return lam[0], lam[1]
    if spec.kind == "disk":
        return oracles.disk_eigenvalues(spec.params[0])
    if spec.kind == "interval":
        a, b = spec.params
        k = (math.pi / (b - a)) ** 2
        return k, 4 * k
    return None


def run_eigen(domain: DomainSpec, hs=(0.1, 0.05, 0.025), ws=None) -> ExperimentResult:
    """λ₁, λ₂ across refinements with observed orders and Richardson values."""
    ws = _ws(ws)
    exact = exact_eigenvalues(domain)
    hs = sorted(hs, reverse=True)
    rows, l1, l2 = [], [], []
    for h in hs:
        d = ws.get(domain, h)
        l1.append(d.spectral.lambda1)
        l2.append(d.spectral.lambda2)
        q = mesh_quality(d.mesh)
        rows.append({"h": float(h), "n_nodes": int(d.mesh.n_nodes), "h_actual": q.h_actual,
                     "lambda1": l1[-1], "lambda2": l2[-1]})
    checks, meta = {}, {"domain": str(domain)}
    if exact is not None:
        e1 = [abs(v - exact[0]) / exact[0] for v in l1]
        e2 = [abs(v - exact[1]) / exact[1] for v in l2]
        for r, a, b in zip(rows, e1, e2):
            r["rel_err_lambda1"], r["rel_err_lambda2"] = a, b
        meta.update(lambda1_exact=exact[0], lambda2_exact=exact[1])
        if len(hs) >= 2:
            orders = _order(e1, hs)
            rich = (4 * l1[-1] - l1[-2]) / 3
            rich_err = abs(rich - exact[0]) / exact[0]
            meta.update(order_lambda1=orders, richardson_lambda1=rich,
                        richardson_rel_err=rich_err, order_lambda2=_order(e2, hs))
            checks["order_lambda1>=1.8"] = min(orders) >= 1.8
            checks["richardson_rel_err<=1e-3"] = rich_err <= 1e-3
    checks["gap_positive"] = all(b > a for a, b in zip(l1, l2))
    return ExperimentResult("eigen", rows, checks, meta)


# ----------------------------------------------------------------- resolvent


def run_resolvent(domain: DomainSpec, h: float, eps_list=(0.1, 0.01, -0.1, -0.01), a: float = 1.0,
                  ws=None) -> ExperimentResult:
    """‖T_ε(εaφ₁) − aφ₁‖_∞ for each ε."""
    d = _ws(ws).get(domain, h)
    rows = []
    for eps in eps_list:
        v = resolvent(d.ops, d.spectral, eps, eps * a * d.spectral.phi1)
        err = float(np.max(np.abs(v - a * d.spectral.phi1)))
        rows.append({"eps": float(eps), "a": float(a), "sup_error": err})
    checks = {"identity<=1e-8*a": all(r["sup_error"] <= 1e-8 * a for r in rows)}
    return ExperimentResult("resolvent", rows, checks, {"domain": str(domain), "h": h})


# ---------------------------------------------------------------- AMP sweep


def sweep_grid(spectral: SpectralData, sign: int, b: float,
               factors=(0.2, 0.1, 0.05, 0.025)):
    """ε_k = ±factor_k·(λ₂−λ₁)/2 and η_k = |ε_k|·b·‖φ₁‖₁.

    η₀ is the smallest budget that admits every aligned load at the first
    cell; halving ε halves η so the pair shrinks jointly.
    """
    half_gap = spectral.gap / 2
    eps = [sign * f * half_gap for f in factors]
    eta = [abs(e) * b * spectral.l1_norm for e in eps]
    return eps, eta


def run_amp_sweep(domain: DomainSpec, h: float, sign: int = 1, a: float = 1.0, b: float = 2.0,
                  p: float = 4.0, M: float = 1e6, families=FAMILIES,
                  factors=(0.2, 0.1, 0.05, 0.025), jobs: int = 1, ws=None) -> ExperimentResult:
    d = _ws(ws).get(domain, h)
    eps, eta = sweep_grid(d.spectral, sign, b, factors)
    res = amp_sweep(d.ops, d.spectral, families, a, b, p, M, eps, eta, sign=sign,
                    pairing="diagonal", jobs=jobs)
    rows = [{"eps": c.eps, "eta": c.eta, "n_loads": c.n_loads, "inf_ratio": c.inf_ratio,
             "sup_ratio": c.sup_ratio, "excess": c.excess(a, b)} for c in res.cells]
    trend = band_excess_trend(res)
    last = res.admissible()[-1]
    checks = {
        "all_cells_admissible": len(res.admissible()) == len(res.cells),
        "smallest_cell_inf>=a-0.05": last.inf_ratio >= a - 0.05,
        "smallest_cell_sup<=b+0.05": last.sup_ratio <= b + 0.05,
        "excess_monotone": all(trend[i + 1] <= trend[i] + 1e-3 for i in range(len(trend) - 1)),
    }
    meta = {"domain": str(domain), "h": h, "sign": sign, "a": a, "b": b, "p": p, "M": M,
            "families": list(families)}
    name = "amp_sweep_pos" if sign > 0 else "amp_sweep_neg"
    return ExperimentResult(name, rows, checks, meta)


def run_amp_limit(domain: DomainSpec, h: float, eps_seq=(0.5, 0.25, 0.125, 0.0625, 0.03125),
                  ws=None) -> ExperimentResult:
    """ε·T_ε(1)/φ₁ against ∫φ₁ (closed form 8/π² on the unit square)."""
    d = _ws(ws).get(domain, h)
    exact = 8 / math.pi ** 2 if domain.kind == "unit_square" else None
    tab = amp_limit_check(d.ops, d.spectral, np.ones(d.mesh.n_nodes), eps_seq, exact)
    rows = [{"eps": e, "deviation": a, "deviation_discrete": b}
            for e, a, b in zip(tab.eps, tab.deviation, tab.deviation_discrete)]
    dec = all(tab.deviation_discrete[i + 1] < tab.deviation_discrete[i]
              for i in range(len(rows) - 1))
    checks = {
        "deviation_decreasing": dec,
        "slope_in_[0.8,1.2]": abs(tab.slope - 1.0) <= 0.2,
        "final_deviation<=2%+h^2": tab.deviation[-1] <= 0.02 * tab.limit + h * h,
    }
    meta = {"domain": str(domain), "h": h, "limit": tab.limit,
            "discrete_limit": tab.discrete_limit, "slope": tab.slope}
    return ExperimentResult("amp_limit", rows, checks, meta)


# -------------------------------------------------------------- semilinear


def solve(d: Discretization, g: Nonlinearity, eps: float, delta: float, A: float = 1.0,
          start: str = "upper") -> sl.SolveReport:
    if eps < 0:
        return sl.solve_negative(d.ops, d.spectral, g, eps, delta, start=start)
    return sl.solve_positive(d.ops, d.spectral, g, eps, delta, A)


def run_solve(domain: DomainSpec, h: float, g: Nonlinearity, eps: float, delta: float,
              A: float = 1.0, ws=None) -> ExperimentResult:
    d = _ws(ws).get(domain, h)
    rep = solve(d, g, eps, delta, A)
    checks = rep.checks(d.spectral)
    meta = {"domain": str(domain), "h": h, "g": str(g), "A": A, "report": rep.to_dict()}
    row = {k: v for k, v in rep.to_dict().items() if not isinstance(v, (list, dict))}
    return ExperimentResult("solve", [row], checks, meta)


@dataclass
class ConvergenceTable:
    rows: list
    order: dict
    extrapolated: dict
    B_reference: float
    B_source: str
    B_discrete: float


def _reference_B(domain: DomainSpec, g: Nonlinearity, c: float, d: Discretization):
    if domain.kind == "interval" and g.family == "powerplus" and g.params == (1.0, 0.5, 0.0) \
            and np.allclose(domain.params, (0.0, math.pi)):
        return oracles.sqrt_limit_coefficient(c), "quadrature"
    return sl.limit_coefficient(d.ops, d.spectral, g, c), "discrete"


def run_convergence_study(domain: DomainSpec, g: Nonlinearity, c: float = 1.0, A: float = 1.0,
                          eps_list=(-0.2, -0.1, -0.05, -0.025, 0.2, 0.1, 0.05, 0.025),
                          h: float = math.pi / 800, shoot: bool | None = None, jobs: int = 1,
                          ws=None) -> ConvergenceTable:
    """Solutions for δ = cε along an ε grid, compared against Bφ₁.

    In 1D the solutions are also compared with a shooting-method reference.
    """
    d = _ws(ws).get(domain, h)
    B_disc = sl.limit_coefficient(d.ops, d.spectral, g, c)
    B_ref, source = _reference_B(domain, g, c, d)
    interior = d.mesh.interior
    shoot = domain.dimension == 1 and not g.gradient_dependent if shoot is None else shoot

    def one(eps):
        delta = c * eps
        row = {"eps": float(eps), "delta": float(delta), "h": float(h)}
        try:
            rep = solve(d, g, eps, delta, A)
        except Exception as exc:  # annotated per row, the table continues
            row.update(error=f"{type(exc).__name__}: {exc}")
            return row
        ratio = rep.u[interior] / d.spectral.phi1[interior]
        row.update(sup_dev=float(np.max(np.abs(ratio - B_disc))), theta=rep.theta,
                   iterations=rep.iterations, identity_residual=rep.identity_residual,
                   ok=rep.ok(d.spectral))
        try:
            row["rho"] = cc.log_concavity_report(d.mesh, rep.u, n_pairs=200).rho
        except ValueError:
            row["rho"] = math.nan
        if shoot:
            a, b = domain.params
            ref = oracles.ShootingSolution(g.scalar, eps, delta, length=b - a)
            exact = ref(d.mesh.nodes[:, 0] - a)
            row["shooting_rel_err"] = float(np.max(np.abs(rep.u - exact)) / np.max(exact))
        return row

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            rows = list(pool.map(one, eps_list))
    else:
        rows = [one(e) for e in eps_list]
    rows.sort(key=lambda r: (-abs(r["eps"]), r["eps"]))
    order, extrap = {}, {}
    for sgn, name in ((-1, "neg"), (1, "pos")):
        side = [r for r in rows if np.sign(r["eps"]) == sgn and "sup_dev" in r]
        if len(side) >= 3:
            e = np.log([abs(r["eps"]) for r in side])
            v = np.log([r["sup_dev"] for r in side])
            order[name] = float(np.polyfit(e, v, 1)[0])
        if len(side) >= 2:
            r1, r2 = side[-2], side[-1]
            t = abs(r2["eps"]) / abs(r1["eps"])
            extrap[name] = (r2["theta"] - t * r1["theta"]) / (1 - t)
    return ConvergenceTable(rows, order, extrap, B_ref, source, B_disc)


def run_convergence(domain: DomainSpec, g: Nonlinearity, c: float = 1.0, A: float = 1.0,
                    eps_list=(-0.2, -0.1, -0.05, -0.025, 0.2, 0.1, 0.05, 0.025),
                    h: float = math.pi / 800, jobs: int = 1, ws=None) -> ExperimentResult:
    tab = run_convergence_study(domain, g, c, A, eps_list, h, jobs=jobs, ws=ws)
    checks = {"all_solves_ok": all(r.get("ok", False) for r in tab.rows)}
    for sgn, name in ((-1, "neg"), (1, "pos")):
        side = [r for r in tab.rows if np.sign(r["eps"]) == sgn and "sup_dev" in r]
        if side:
            devs = [r["sup_dev"] for r in side]
            checks[f"{name}_monotone"] = all(devs[i + 1] < devs[i] for i in range(len(devs) - 1))
        if name in tab.extrapolated:
            err = abs(tab.extrapolated[name] - tab.B_reference) / tab.B_reference
            checks[f"{name}_extrapolation_within_2%"] = err <= 0.02
    shots = [r["shooting_rel_err"] for r in tab.rows if "shooting_rel_err" in r]
    if shots:
        checks["shooting_rel_err<=1e-4"] = max(shots) <= 1e-4
    meta = {"domain": str(domain), "g": str(g), "c": c, "A": A, "order": tab.order,
            "extrapolated": tab.extrapolated, "B_reference": tab.B_reference,
            "B_source": tab.B_source, "B_discrete": tab.B_discrete}
    return ExperimentResult("convergence", tab.rows, checks, meta)


# ---------------------------------------------------------------- concavity


def torsion(d: Discretization) -> np.ndarray:
    return solve_dirichlet(d.ops, np.ones(d.mesh.n_nodes))


def run_concavity(domain: DomainSpec, h: float, field_name: str = "phi1", transform="log",
                  d0: float | None = None, seed: int = 0, g: Nonlinearity | None = None,
                  eps: float = -0.05, ws=None) -> ExperimentResult:
    """Concavity report for a built-in field (``phi1``, ``torsion`` or ``solution``)."""
    d = _ws(ws).get(domain, h)
    if field_name == "phi1":
        u = d.spectral.phi1
    elif field_name == "torsion":
        u = torsion(d)
    elif field_name == "solution":
        u = solve(d, g or Nonlinearity.parse(SQRT), eps, eps).u
    else:
        raise ValueError(f"unknown field {field_name!r}")
    return concavity_result(d.mesh, u, transform, d0, seed,
                            {"domain": str(domain), "h": h, "field": field_name})


def concavity_result(mesh, u, transform, d0, seed, meta) -> ExperimentResult:
    rep = cc.concavity_report(mesh, u, transform, d0, seed=seed)
    qc = cc.quasi_concavity_check(mesh, u)
    row = rep.to_dict()
    row.update(levels_checked=qc.levels_checked, qc_deficit=qc.worst)
    checks = {"concave": rep.concave}
    return ExperimentResult("concavity", [row], checks, meta)


# ------------------------------------------------------------ negative controls


def two_bump(mesh: Mesh, centers, width: float) -> np.ndarray:
    x = mesh.nodes
    return sum(np.exp(-((x - np.asarray(c)) ** 2).sum(axis=1) / width ** 2) for c in centers)


def run_negative_controls(seed: int = 0, ws=None) -> ExperimentResult:
    """Cases that must be flagged as failures.

    The convex field |x|² must fail the concavity scan; two bumps on a
    stadium must fail quasi-concavity; a positive solve with δ = √ε (far
    outside the A-band) must not conform.
    """
    ws = _ws(ws)
    rows, checks = [], {}

    sq = ws.get(DomainSpec.unit_square(), 0.05)
    v = (sq.mesh.nodes ** 2).sum(axis=1)
    scan = cc.concavity_function_scan(sq.mesh, v, seed=seed)
    flagged = scan.worst > cc.CF_FACTOR * float(v.max() - v.min())
    rows.append({"control": "convex_scan", "value": scan.worst, "flagged": flagged})
    checks["convex_field_flagged"] = flagged

    st = build_mesh(DomainSpec.stadium(1.0, 0.5), 0.04)
    u = two_bump(st, [(-1.0, 0.0), (1.0, 0.0)], 0.3)
    u[st.boundary_mask] = 0.0
    qc = cc.quasi_concavity_check(st, u)
    rows.append({"control": "two_bump_stadium", "value": qc.worst, "flagged": qc.worst > 0.2})
    checks["two_bump_deficit>0.2"] = qc.worst > 0.2

    iv = ws.get(DomainSpec.interval(0.0, math.pi), math.pi / 200)
    g = Nonlinearity.parse(SQRT)
    eps = 1e-4
    delta = math.sqrt(eps)
    outcome, value = "conforming", math.nan
    try:
        rep = sl.solve_positive(iv.ops, iv.spectral, g, eps, delta, 1.0, enforce=False)
        B1 = sl.limit_coefficient(iv.ops, iv.spectral, g, 1.0)
        ratio = rep.u[iv.mesh.interior] / iv.spectral.phi1[iv.mesh.interior]
        value = float(ratio.max())
        if not rep.ok(iv.spectral) or value > 10 * B1:
            outcome = "ratio_drift"
    except sl.BoxEscapeError as exc:
        outcome, value = "box_escape", exc.breach
    except sl.IterationCapError:
        outcome = "no_convergence"
    rows.append({"control": "mismatched_order", "value": value, "flagged": outcome != "conforming",
                 "outcome": outcome})
    checks["mismatched_order_nonconforming"] = outcome != "conforming"
    for r in rows:
        r.setdefault("outcome", "flagged" if r["flagged"] else "missed")
    return ExperimentResult("negative_controls", rows, checks, {"seed": seed})


# ------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    kind: str
    domain: str = "unit_square"
    h: list = field(default_factory=lambda: [0.05])
    eps: list = field(default_factory=lambda: [-0.05])
    delta: list | None = None
    c: float = 1.0
    A: float = 1.0
    g: str = SQRT
    seed: int = 0
    sign: int = 1
    transform: str = "log"
    field: str = "phi1"
    out: str = "results"
    format: str = "csv"
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        self.h = [float(v) for v in np.atleast_1d(self.h)]
        self.eps = [float(v) for v in np.atleast_1d(self.eps)]
        if self.delta is not None:
            self.delta = [float(v) for v in np.atleast_1d(self.delta)]
            if len(self.delta) != len(self.eps):
                raise ValueError("delta must list one value per eps")
        if any(v <= 0 for v in self.h):
            raise ValueError("mesh sizes must be positive")
        if self.A < 1:
            raise ValueError("A must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        DomainSpec.parse(self.domain)
        Nonlinearity.parse(self.g)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        text = path.read_text()
        doc = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        return cls.from_dict(doc)


def run(config: ExperimentConfig, ws=None) -> ExperimentResult:
    """Dispatch one configured experiment (outputs are not written here)."""
    spec = DomainSpec.parse(config.domain)
    g = Nonlinearity.parse(config.g)
    h = config.h[0]
    k = config.kind
    if k == "eigen":
        return run_eigen(spec, config.h, ws)
    if k == "resolvent":
        return run_resolvent(spec, h, config.eps, ws=ws)
    if k == "amp_sweep":
        return run_amp_sweep(spec, h, config.sign, jobs=config.jobs, ws=ws)
    if k == "amp_limit":
        return run_amp_limit(spec, h, ws=ws)
    if k == "solve":
        delta = config.delta[0] if config.delta else config.c * config.eps[0]
        return run_solve(spec, h, g, config.eps[0], delta, config.A, ws)
    if k == "convergence":
        return run_convergence(spec, g, config.c, config.A, config.eps, h, config.jobs, ws)
    if k == "concavity":
        return run_concavity(spec, h, config.field, config.transform, seed=config.seed, g=g,
                             eps=config.eps[0], ws=ws)
    return run_negative_controls(config.seed, ws)
