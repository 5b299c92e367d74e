import math

import numpy as np
import pytest

from conftest import B_SQRT, IDENTITY_PHI1
from ellipticlab.domain import DomainSpec
from ellipticlab.nonlinearity import Nonlinearity
from ellipticlab.oracles import ShootingSolution, interval_phi1
from ellipticlab.resolvent import resolvent
from ellipticlab.semilinear import (BoxEscapeError, BracketError, IterationCapError, ProblemParams,
                                    build_constants_negative, build_constants_positive,
                                    gradient_reconstruct, identity_residual, limit_coefficient,
                                    solve_negative, solve_positive)

SQRT = Nonlinearity.power()
LOGP = Nonlinearity.log_plus()


def test_problem_params():
    with pytest.raises(ValueError):
        ProblemParams(0.1, -0.1)
    with pytest.raises(ValueError):
        ProblemParams(0.1, 0.1, A=0.5)
    assert ProblemParams(0.1, 0.15, A=2).in_band()
    assert not ProblemParams(0.1, 0.3, A=2).in_band()


def test_negative_constants_sqrt(line):
    k = build_constants_negative(line.ops, line.spectral, SQRT, -0.1, -0.1)
    assert k.s0 == pytest.approx(1.0, rel=1e-12)
    assert k.C_envelope == pytest.approx(0.5, rel=1e-3)
    assert k.C == pytest.approx(1.1 * k.C_envelope)
    i = line.mesh.interior
    assert np.all(k.psi[i] > 0)
    assert np.all(k.psi >= k.sigma * line.spectral.phi1)
    assert math.log2(k.sigma).is_integer()


def test_negative_constants_need_negative_signs(line):
    with pytest.raises(ValueError):
        build_constants_negative(line.ops, line.spectral, SQRT, 0.1, 0.1)


def test_positive_constants_sqrt(line):
    k = build_constants_positive(line.ops, line.spectral, SQRT, A=1)
    sd = line.spectral
    assert k.s0p == pytest.approx(0.25, rel=1e-12)
    assert k.Cp_envelope == pytest.approx(sd.l1_norm * sd.sup_norm, rel=1e-3)
    assert k.Cp * sd.l1_norm + k.beta / (4 * sd.sup_norm) <= k.beta / (2 * sd.sup_norm)
    assert k.varsigma * sd.sup_norm <= min(k.s0p, k.beta / 4)
    assert k.eps0 == pytest.approx(min(sd.gap, 1.0))
    assert math.log2(k.beta).is_integer() and math.log2(k.varsigma).is_integer()


def _assert_converged(rep, d):
    assert rep.ok(d.spectral), rep.checks(d.spectral)
    assert np.all(rep.u >= rep.lower - 1e-8 * rep.sup_norm)
    assert np.all(rep.u <= rep.upper + 1e-8 * rep.sup_norm)


@pytest.mark.parametrize("eps", [-0.05, 0.02])
def test_interval_solution_matches_shooting(line, eps):
    rep = (solve_negative if eps < 0 else solve_positive)(line.ops, line.spectral, SQRT, eps, eps)
    _assert_converged(rep, line)
    shot = ShootingSolution(SQRT, eps, eps)
    err = np.max(np.abs(rep.u - shot(line.mesh.nodes[:, 0])))
    assert err <= 1e-4 * rep.sup_norm


def test_fixed_point_and_identity(line):
    rep = solve_positive(line.ops, line.spectral, SQRT, 0.02, 0.02)
    Tu = resolvent(line.ops, line.spectral, 0.02, 0.02 * SQRT(rep.u))
    assert np.max(np.abs(Tu - rep.u)) <= 1e-8 * rep.sup_norm
    assert rep.identity_residual <= 1e-6 * 0.02 * rep.theta * line.spectral.l2_norm_sq


@pytest.mark.parametrize("g", [SQRT, LOGP], ids=str)
@pytest.mark.parametrize("eps", [-0.05, 0.05])
def test_square_and_disk_solves(square, disk, g, eps):
    for d in (square, disk):
        rep = (solve_negative if eps < 0 else solve_positive)(d.ops, d.spectral, g, eps, eps)
        _assert_converged(rep, d)


def test_uniqueness_from_both_ends(square):
    a = solve_negative(square.ops, square.spectral, SQRT, -0.05, -0.05, start="upper")
    b = solve_negative(square.ops, square.spectral, SQRT, -0.05, -0.05, start="lower")
    assert np.max(np.abs(a.u - b.u)) <= 1e-6 * a.sup_norm


def test_undamped_iteration_is_monotone(line):
    rep = solve_negative(line.ops, line.spectral, SQRT, -0.05, -0.05, omega=1.0)
    assert rep.monotone is True
    assert all(np.diff(rep.trace) <= 1e-14)
    _assert_converged(rep, line)


def test_gradient_factor_solve(line, square):
    g = Nonlinearity.power(kappa=0.1)
    for d in (line, square):
        rep = solve_negative(d.ops, d.spectral, g, -0.05, -0.05)
        _assert_converged(rep, d)
        assert rep.monotone is None


def test_iteration_cap(line):
    with pytest.raises(IterationCapError):
        solve_negative(line.ops, line.spectral, SQRT, -0.05, -0.05, maxiter=3)


def test_positive_preconditions(line):
    with pytest.raises(ValueError):
        solve_positive(line.ops, line.spectral, SQRT, 0.02, 0.05, A=2)
    with pytest.raises(ValueError):
        solve_positive(line.ops, line.spectral, SQRT, 10.0, 10.0)


def test_box_escape_outside_regime(line):
    eps = 1e-4
    with pytest.raises(BoxEscapeError) as info:
        solve_positive(line.ops, line.spectral, SQRT, eps, math.sqrt(eps), enforce=False)
    assert info.value.breach > 0


def test_identity_residual_of_phi1(line):
    r = identity_residual(line.ops, line.spectral, line.spectral.phi1, SQRT, -0.05, -0.05)
    assert r == pytest.approx(IDENTITY_PHI1, rel=1e-3)
    assert identity_residual(line.ops, line.spectral, line.spectral.phi1, SQRT, 0.0, 0.0) == 0.0


def test_gradient_of_linear_field_exact(disk):
    x, y = disk.mesh.nodes.T
    grad = gradient_reconstruct(disk.mesh, 0.7 * x - 2.0 * y + 1.0)
    np.testing.assert_allclose(grad, np.broadcast_to([0.7, -2.0], grad.shape), atol=1e-12)
    assert not gradient_reconstruct(disk.mesh, np.zeros(disk.mesh.n_nodes)).any()


def test_gradient_of_phi1_second_order(ws):
    errs = []
    for n in (100, 200, 400):
        m = ws.get(DomainSpec.interval(0.0, math.pi), math.pi / n).mesh
        x = m.nodes[:, 0]
        u = interval_phi1(x)
        g = gradient_reconstruct(m, u)[:, 0]
        exact = math.sqrt(2 / math.pi) * np.cos(x)
        errs.append(np.max(np.abs(g - exact)[~m.boundary_mask]))
    assert math.log2(errs[0] / errs[1]) > 1.9
    assert math.log2(errs[1] / errs[2]) > 1.9


def test_limit_coefficient_sqrt(line):
    B = limit_coefficient(line.ops, line.spectral, SQRT, 1.0)
    assert B == pytest.approx(B_SQRT, rel=1e-4)
    assert limit_coefficient(line.ops, line.spectral, SQRT, 4.0) / B == pytest.approx(16.0, rel=1e-10)


def test_limit_coefficient_bracket_failure(line):
    g = Nonlinearity.power(r=0.999)
    with pytest.raises(BracketError):
        limit_coefficient(line.ops, line.spectral, g, 0.5)


def test_limit_coefficient_rejects_gradient_dependence(line):
    with pytest.raises(ValueError):
        limit_coefficient(line.ops, line.spectral, Nonlinearity.power(kappa=0.1), 1.0)


def test_report_serialises(line):
    rep = solve_negative(line.ops, line.spectral, SQRT, -0.05, -0.05)
    doc = rep.to_dict()
    assert doc["constants"]["s0"] == pytest.approx(1.0)
    assert len(doc["u"]) == line.mesh.n_nodes
