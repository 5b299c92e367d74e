"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np

from conftest import smooth_test_field
from ellipticlab import experiments as ex
from ellipticlab import oracles
from ellipticlab.concavity import (concavity_function_scan, log_concavity_report, power_concavity,
                                   CF_FACTOR)
from ellipticlab.domain import DomainSpec
from ellipticlab.fem import rayleigh_gap_check
from ellipticlab.nonlinearity import Nonlinearity

SQUARE = DomainSpec.unit_square()
DISK = DomainSpec.disk(1.0)
ELLIPSE = DomainSpec.ellipse(1.0, 0.6)
LINE = DomainSpec.interval(0.0, math.pi)
SQRT = Nonlinearity.power()
LOGP = Nonlinearity.log_plus()

LINES: list[str] = []


def _verdict(number: int, title: str, budget: float, start: float, checks: dict, detail: str):
    elapsed = time.perf_counter() - start
    checks = dict(checks)
    checks[f"runtime<={budget:g}s"] = elapsed <= budget
    ok = all(bool(v) for v in checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = (f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} | {detail} | "
            f"{elapsed:.1f}s of {budget:g}s" + (f" | failed: {', '.join(failed)}" if failed else ""))
    LINES.append(line)
    print(line)
    assert ok, line


def _richardson(coarse, fine):
    return (4 * fine - coarse) / 3


def test_criterion_1_eigen_fixtures(ws):
    t0 = time.perf_counter()
    pi2 = math.pi ** 2
    cases = [("square lambda1", SQUARE, "lambda1", 2 * pi2),
             ("square lambda2", SQUARE, "lambda2", 5 * pi2),
             ("disk lambda1", DISK, "lambda1", oracles.disk_eigenvalues(1.0)[0])]
    checks, parts = {}, []
    for name, spec, attr, exact in cases:
        vals = [getattr(ws.get(spec, h).spectral, attr) for h in (0.1, 0.05, 0.025)]
        errs = [abs(v - exact) for v in vals]
        order = math.log2(errs[1] / errs[2])
        rich = abs(_richardson(vals[1], vals[2]) - exact) / exact
        checks[f"{name} richardson<=1e-3"] = rich <= 1e-3
        checks[f"{name} order>=1.8"] = order >= 1.8
        parts.append(f"{name}: order {order:.2f}, rel err {rich:.1e}")
    _verdict(1, "eigen fixtures", 60, t0, checks, "; ".join(parts))


def test_criterion_2_resolvent_identity(ws):
    t0 = time.perf_counter()
    checks, worst = {}, 0.0
    for spec in (SQUARE, DISK):
        res = ex.run_resolvent(spec, 0.05, (0.1, 0.01, -0.1, -0.01), a=1.0, ws=ws)
        checks[f"{spec.kind}"] = res.ok
        worst = max(worst, max(r["sup_error"] for r in res.rows))
    _verdict(2, "resolvent identity", 10, t0, checks, f"worst sup error {worst:.1e} (limit 1e-8)")


def test_criterion_3_amp_sweeps(ws):
    t0 = time.perf_counter()
    checks, parts = {}, []
    for spec in (SQUARE, DISK):
        for sign in (1, -1):
            res = ex.run_amp_sweep(spec, 0.05, sign, a=1.0, b=2.0, p=4.0, jobs=4, ws=ws)
            for k, v in res.checks.items():
                checks[f"{spec.kind}{sign:+d} {k}"] = v
            parts.append(f"{spec.kind} sign {sign:+d} excess "
                         + " > ".join(f"{r['excess']:.3f}" for r in res.rows))
    _verdict(3, "quantified anti-maximum sweep, both signs", 300, t0, checks, "; ".join(parts))


def test_criterion_4_amp_limit(ws):
    t0 = time.perf_counter()
    res = ex.run_amp_limit(SQUARE, 0.05, ws=ws)
    detail = (f"slope {res.meta['slope']:.3f}, final deviation {res.rows[-1]['deviation']:.2e} "
              f"against 8/pi^2")
    _verdict(4, "anti-maximum limit on the square", 30, t0, res.checks, detail)


def test_criterion_5_existence(ws):
    t0 = time.perf_counter()
    checks, n = {}, 0
    worst_box = worst_id = 0.0
    for spec in (SQUARE, DISK):
        d = ws.get(spec, 0.05)
        for g in (SQRT, LOGP):
            for eps in (-0.05, -0.025, 0.025, 0.05):
                rep = ex.solve(d, g, eps, eps)
                c = rep.checks(d.spectral)
                checks[f"{spec.kind} {g} eps={eps}"] = all(c.values())
                worst_box = max(worst_box, rep.box_violation / rep.sup_norm)
                bound = abs(eps) * rep.theta * d.spectral.l2_norm_sq
                worst_id = max(worst_id, rep.identity_residual / bound)
                n += 1
    detail = (f"{n} solves, worst box violation {worst_box:.1e}*|u|, "
              f"worst identity residual {worst_id:.1e}*|eps|theta|phi1|^2")
    _verdict(5, "existence for both signs", 180, t0, checks, detail)


def test_criterion_6_convergence(ws):
    t0 = time.perf_counter()
    res = ex.run_convergence(LINE, SQRT, c=1.0, h=math.pi / 800, jobs=4, ws=ws)
    B = oracles.sqrt_limit_coefficient(1.0)
    ext = res.meta["extrapolated"]
    shots = max(r["shooting_rel_err"] for r in res.rows)
    detail = (f"B oracle {B:.6f}, extrapolated {ext['neg']:.6f} (eps<0) {ext['pos']:.6f} (eps>0), "
              f"worst shooting error {shots:.1e}")
    _verdict(6, "convergence to B phi1", 120, t0, res.checks, detail)


def test_criterion_7_log_concavity(ws):
    t0 = time.perf_counter()
    checks, parts = {}, []
    for spec in (DISK, ELLIPSE):
        d = ws.get(spec, 0.05)
        rho_phi = log_concavity_report(d.mesh, d.spectral.phi1).rho
        rhos = []
        for eps in (-0.05, -0.025, 0.025, 0.05):
            rep = log_concavity_report(d.mesh, ex.solve(d, SQRT, eps, eps).u)
            checks[f"{spec.kind} eps={eps} concave"] = rep.concave
            checks[f"{spec.kind} eps={eps} rho>=rho_phi/2"] = rep.rho >= rho_phi / 2
            checks[f"{spec.kind} eps={eps} within 25%"] = abs(rep.rho - rho_phi) <= 0.25 * rho_phi
            rhos.append(rep.rho / rho_phi)
        parts.append(f"{spec.kind} rho/rho(phi1) in [{min(rhos):.3f}, {max(rhos):.3f}]")
    rho_sq = [log_concavity_report(ws.get(SQUARE, h).mesh, ws.get(SQUARE, h).spectral.phi1).rho
              for h in (0.05, 0.025)]
    rho_ext = 2 * rho_sq[1] - rho_sq[0]
    checks["square rho extrapolates to pi^2 within 10%"] = abs(rho_ext - math.pi ** 2) <= 0.1 * math.pi ** 2
    parts.append(f"square rho {rho_sq[0]:.3f}, {rho_sq[1]:.3f} -> {rho_ext:.3f} (pi^2 = {math.pi ** 2:.3f})")
    _verdict(7, "log-concavity of solutions", 180, t0, checks, "; ".join(parts))


def test_criterion_8_classical_oracles(ws):
    t0 = time.perf_counter()
    disk = ws.get(DISK, 0.05)
    tor = power_concavity(disk.mesh, ex.torsion(disk), 0.5)
    lam2 = disk.spectral.lambda2
    ratios = []
    for seed in range(100):
        w = smooth_test_field(disk, np.random.default_rng(seed))
        ratios.append(rayleigh_gap_check(disk.ops, disk.spectral, w) / lam2)
    sq = ws.get(SQUARE, 0.05)
    v = np.log(np.where(sq.spectral.phi1 > 0, sq.spectral.phi1, np.nan))
    scan = concavity_function_scan(sq.mesh, v, seed=0)
    inner = v[np.isfinite(v)]
    rep = log_concavity_report(sq.mesh, sq.spectral.phi1)
    checks = {
        "torsion sqrt concave": tor.concave,
        "gap property on 100 fields": min(ratios) >= 1 - 1e-8,
        "log phi1 scan <= tol_C": scan.worst <= rep.tol_C,
    }
    detail = (f"torsion^(1/2) max eig {tor.hess_max_eig:.3f}, min R(w)/lambda2 {min(ratios):.3f}, "
              f"scan worst {scan.worst:.1e} vs tol {rep.tol_C:.1e} (oscillation scale {CF_FACTOR:g}*"
              f"{np.ptp(inner):.2f})")
    _verdict(8, "classical oracles", 60, t0, checks, detail)


def test_criterion_9_negative_controls(ws):
    t0 = time.perf_counter()
    res = ex.run_negative_controls(0, ws)
    detail = ", ".join(f"{r['control']}: {r['outcome']} ({r['value']:.3g})" for r in res.rows)
    _verdict(9, "negative controls", 60, t0, res.checks, detail)


if __name__ == "__main__":
    workspace = ex.Workspace()
    failures = 0
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]:
        try:
            fn(workspace)
        except AssertionError:
            failures += 1
    raise SystemExit(1 if failures else 0)
