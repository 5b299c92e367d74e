import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipticlab.domain import (DomainError, DomainSpec, MeshError, build_mesh, mesh_quality,
                                read_mesh, write_mesh)

ALL_SPECS = [
    DomainSpec.interval(0.0, math.pi),
    DomainSpec.unit_square(),
    DomainSpec.rectangle(2.0, 1.0),
    DomainSpec.disk(1.0),
    DomainSpec.ellipse(1.0, 0.6),
    DomainSpec.regular_polygon(6, 1.0),
    DomainSpec.convex_polygon([[0, 0], [2, 0], [1.5, 1], [0.2, 1.2]]),
    DomainSpec.stadium(1.0, 0.5),
]


def test_interval_pi_over_4():
    m = build_mesh(DomainSpec.interval(0.0, math.pi), math.pi / 4)
    assert m.n_nodes == 5
    assert m.cells.shape == (4, 2)
    assert m.boundary_mask.tolist() == [True, False, False, False, True]


def test_unit_square_h_half():
    m = build_mesh(DomainSpec.unit_square(), 0.5)
    assert m.n_nodes == 9
    assert m.cells.shape[0] == 8
    assert int(m.boundary_mask.sum()) == 8
    assert m.interior.size == 1


@pytest.mark.parametrize("h", [0.3, 0.1, 0.037])
def test_disk_boundary_radii_exact(h):
    m = build_mesh(DomainSpec.disk(1.0), h)
    r = np.linalg.norm(m.nodes[m.boundary_mask], axis=1)
    assert np.max(np.abs(r - 1.0)) <= 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
def test_mesh_invariants(spec):
    m = build_mesh(spec, 0.1)
    m.validate()
    if m.dim == 2:
        p = m.nodes[m.cells]
        signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        assert np.all(signed > 0)
        assert m.cell_measures.sum() == pytest.approx(spec.area, rel=0.02)
    assert mesh_quality(m).min_angle > 0


def test_structured_quality():
    q = mesh_quality(build_mesh(DomainSpec.unit_square(), 0.1))
    assert q.min_angle == pytest.approx(45.0)
    assert q.h_actual == pytest.approx(math.sqrt(2) * 0.1)


def test_interval_quality_convention():
    q = mesh_quality(build_mesh(DomainSpec.interval(0, 1), 0.1))
    assert q.max_aspect == 1.0


def test_refinement_doubles_structured_nodes():
    a = build_mesh(DomainSpec.unit_square(), 0.1)
    b = build_mesh(DomainSpec.unit_square(), 0.05)
    na = len(np.unique(a.nodes[:, 0]))
    nb = len(np.unique(b.nodes[:, 0]))
    assert nb - 1 >= 2 * (na - 1)


def test_disk_area_order():
    errs = []
    hs = [0.1, 0.05, 0.025]
    for h in hs:
        m = build_mesh(DomainSpec.disk(1.0), h)
        errs.append(abs(m.cell_measures.sum() - math.pi))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.8


@pytest.mark.parametrize("bad", [
    lambda: DomainSpec.disk(0.0),
    lambda: DomainSpec.interval(1.0, 1.0),
    lambda: DomainSpec.convex_polygon([[0, 0], [1, 0], [2, 0]]),
    lambda: DomainSpec.convex_polygon([[0, 0], [1, 0], [1, 0], [0, 1]]),
    lambda: DomainSpec.convex_polygon([[0, 0], [2, 0], [1, 0.3], [1, 2]]),
    lambda: DomainSpec.regular_polygon(2, 1.0),
])
def test_degenerate_specs_rejected(bad):
    with pytest.raises(DomainError):
        bad()


def test_nonpositive_h_rejected():
    with pytest.raises(DomainError):
        build_mesh(DomainSpec.unit_square(), 0.0)


def test_strict_convexity_flag():
    flags = {s.kind: s.strictly_convex for s in ALL_SPECS}
    assert flags == {"interval": True, "unit_square": False, "rectangle": False, "disk": True,
                     "ellipse": True, "regular_polygon": False, "convex_polygon": False,
                     "stadium": False}


@pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
def test_parse_roundtrip(spec):
    assert DomainSpec.parse(str(spec)) == spec


def test_parse_aliases():
    assert DomainSpec.parse("square") == DomainSpec.unit_square()
    assert DomainSpec.parse("interval:a=0,b=pi") == DomainSpec.interval(0.0, math.pi)
    assert DomainSpec.parse("interval:a=0,b=pi/4").params[1] == pytest.approx(math.pi / 4)
    with pytest.raises(DomainError):
        DomainSpec.parse("torus")


@pytest.mark.parametrize("spec", [DomainSpec.interval(0, 1), DomainSpec.disk(1.0),
                                  DomainSpec.stadium(1.0, 0.5)], ids=str)
def test_mesh_file_roundtrip_bit_exact(tmp_path, spec):
    m = build_mesh(spec, 0.15)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    back = read_mesh(path, h=m.h, spec=spec)
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.boundary_mask, m.boundary_mask)
    first = path.read_text().splitlines()[0]
    assert first == f"N {m.n_nodes}"


def test_read_mesh_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("X 3\n")
    with pytest.raises(MeshError):
        read_mesh(p)


def test_mesh_arrays_read_only():
    m = build_mesh(DomainSpec.unit_square(), 0.25)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 1.0


@settings(max_examples=15, deadline=None)
@given(k=st.integers(3, 12), r=st.floats(0.3, 3.0), h=st.floats(0.08, 0.4))
def test_regular_polygon_meshes_valid(k, r, h):
    spec = DomainSpec.regular_polygon(k, r)
    m = build_mesh(spec, h * r)
    m.validate()
    assert m.interior.size > 0
    assert m.cell_measures.sum() == pytest.approx(spec.area, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(rx=st.floats(0.4, 2.0), ry=st.floats(0.4, 2.0))
def test_ellipse_boundary_on_curve(rx, ry):
    spec = DomainSpec.ellipse(rx, ry)
    m = build_mesh(spec, 0.15 * min(rx, ry))
    b = m.nodes[m.boundary_mask]
    assert np.max(np.abs((b[:, 0] / rx) ** 2 + (b[:, 1] / ry) ** 2 - 1.0)) < 1e-11
