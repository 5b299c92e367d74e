import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from conftest import DISK_HOPF, J01_SQ, J11_SQ, smooth_test_field
from ellipticlab import oracles
from ellipticlab.domain import DomainSpec, build_mesh
from ellipticlab.fem import (EigenCache, SolverError, ZeroProjectionError, assemble, hopf_margin,
                             principal_eigenpair, rayleigh_gap_check, read_field, solve_dirichlet,
                             write_field)


def test_oracle_bessel_constants():
    l1, l2 = oracles.disk_eigenvalues(1.0)
    assert l1 == pytest.approx(J01_SQ, rel=1e-15)
    assert l2 == pytest.approx(J11_SQ, rel=1e-15)
    assert oracles.disk_hopf_slope(1.0) == pytest.approx(DISK_HOPF, rel=1e-15)


def test_structured_square_stiffness_is_five_point_stencil():
    mesh = build_mesh(DomainSpec.unit_square(), 0.1)
    K = assemble(mesh).K_full.toarray()
    x = mesh.nodes
    i = int(np.argmin(np.sum((x - 0.5) ** 2, axis=1)))
    row = K[i]
    assert row[i] == pytest.approx(4.0, abs=1e-13)
    nbr = np.flatnonzero(np.abs(row) > 1e-13)
    offs = sorted(map(tuple, np.round((x[nbr] - x[i]) / 0.1).astype(int)))
    assert offs == [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]
    assert np.allclose(row[nbr[nbr != i]], -1.0, atol=1e-13)


@pytest.mark.parametrize("spec", [DomainSpec.unit_square(), DomainSpec.disk(1.0),
                                  DomainSpec.interval(0, 2)], ids=str)
def test_matrix_invariants(spec):
    ops = assemble(build_mesh(spec, 0.1))
    K, M = ops.K_full, ops.M_full
    assert abs(K - K.T).max() < 1e-13
    assert abs(M - M.T).max() < 1e-15
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) < 1e-12
    assert M.sum() == pytest.approx(ops.mesh.cell_measures.sum(), rel=1e-13)
    assert np.linalg.eigvalsh(ops.K.toarray()).min() > 0


def test_disk_torsion_peak():
    mesh = build_mesh(DomainSpec.disk(1.0), 0.025)
    u = solve_dirichlet(assemble(mesh), np.ones(mesh.n_nodes))
    assert u.max() == pytest.approx(0.25, abs=2e-3)
    r2 = np.sum(mesh.nodes ** 2, axis=1)
    assert np.max(np.abs(u - (1 - r2) / 4)) < 3e-3


def test_dirichlet_zero_and_nonfinite():
    ops = assemble(build_mesh(DomainSpec.unit_square(), 0.2))
    assert not solve_dirichlet(ops, np.zeros(ops.mesh.n_nodes)).any()
    bad = np.ones(ops.mesh.n_nodes)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        solve_dirichlet(ops, bad)


@pytest.mark.parametrize("spec", [DomainSpec.unit_square(), DomainSpec.disk(1.0),
                                  DomainSpec.ellipse(1.0, 0.7)], ids=str)
def test_eigen_matches_dense_solver(spec):
    ops = assemble(build_mesh(spec, 0.2))
    sd = principal_eigenpair(ops)
    w = eigh(ops.K.toarray(), ops.M.toarray(), eigvals_only=True)
    assert sd.lambda1 == pytest.approx(w[0], rel=1e-10)
    assert sd.lambda2 == pytest.approx(w[1], rel=1e-9)


def test_eigenvector_normalisation_and_sign(square):
    sd = square.spectral
    assert sd.l2_norm_sq == pytest.approx(1.0, abs=1e-12)
    assert np.all(sd.phi1[square.mesh.interior] > 0)
    assert np.all(sd.phi1[square.mesh.boundary_mask] == 0)
    assert abs(square.ops.inner(sd.phi1, sd.phi2)) < 1e-10
    assert sd.gap > 0


def test_seeded_starts_find_same_eigenpair(square):
    ref = square.spectral
    for seed in (1, 7, 99):
        sd = principal_eigenpair(square.ops, seed=seed)
        assert sd.lambda1 == pytest.approx(ref.lambda1, rel=1e-8)
        assert sd.lambda2 == pytest.approx(ref.lambda2, rel=1e-8)
        assert np.max(np.abs(sd.phi1 - ref.phi1)) < 1e-6


def test_eigen_convergence_square_and_disk(ws):
    for spec, exact in [(DomainSpec.unit_square(), 2 * math.pi ** 2), (DomainSpec.disk(1.0), J01_SQ)]:
        lam = [ws.get(spec, h).spectral.lambda1 for h in (0.1, 0.05, 0.025)]
        err = [abs(v - exact) for v in lam]
        assert all(v > exact for v in lam)
        assert math.log2(err[1] / err[2]) >= 1.8
        assert abs((4 * lam[2] - lam[1]) / 3 - exact) / exact <= 1e-3


def test_interval_eigenpair_matches_sine(line):
    sd = line.spectral
    x = line.mesh.nodes[:, 0]
    assert sd.lambda1 == pytest.approx(1.0, rel=1e-4)
    assert sd.lambda2 == pytest.approx(4.0, rel=1e-4)
    assert np.max(np.abs(sd.phi1 - oracles.interval_phi1(x))) < 1e-4


def test_disk_hopf_margin_approaches_exact_slope(ws):
    margins = [hopf_margin(ws.get(DomainSpec.disk(1.0), h).spectral) for h in (0.1, 0.05, 0.025)]
    errs = [abs(m - DISK_HOPF) for m in margins]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / DISK_HOPF < 0.02


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_projected_rayleigh_quotient_at_least_lambda2(disk, seed):
    rng = np.random.default_rng(seed)
    for w in (rng.standard_normal(disk.mesh.n_nodes), smooth_test_field(disk, rng)):
        rq = rayleigh_gap_check(disk.ops, disk.spectral, w)
        assert rq >= disk.spectral.lambda2 * (1 - 1e-10)


def test_rayleigh_rejects_pure_phi1(disk):
    with pytest.raises(ZeroProjectionError):
        rayleigh_gap_check(disk.ops, disk.spectral, 3.0 * disk.spectral.phi1)


def test_no_interior_raises():
    ops = assemble(build_mesh(DomainSpec.interval(0, 1), 1.0))
    with pytest.raises(SolverError):
        principal_eigenpair(ops)


def test_field_roundtrip(tmp_path):
    v = np.random.default_rng(3).standard_normal(57)
    write_field(v, tmp_path / "f.txt")
    assert np.array_equal(read_field(tmp_path / "f.txt"), v)


def test_eigen_cache_transparent(tmp_path, square):
    cache = EigenCache(tmp_path)
    assert cache.load("sq", 0.05, square.ops) is None
    cache.store("sq", 0.05, square.spectral)
    back = cache.load("sq", 0.05, square.ops)
    assert back.lambda1 == square.spectral.lambda1
    assert np.array_equal(back.phi1, square.spectral.phi1)
