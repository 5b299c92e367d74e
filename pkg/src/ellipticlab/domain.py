"""Convex computational domains and their P1 triangulations."""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

from . import kernels


class DomainError(ValueError):
    """Invalid or degenerate domain description."""


class MeshError(RuntimeError):
    """A generated or loaded mesh violates a structural invariant."""


_KINDS = ("interval", "unit_square", "rectangle", "disk", "ellipse",
          "regular_polygon", "convex_polygon", "stadium")


@dataclass(frozen=True)
class DomainSpec:
    """A bounded convex domain in one or two dimensions.

    Build instances with the named constructors (``DomainSpec.disk(1.0)``
    etc.) or :meth:`parse`; ``params`` is kind-specific.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        p = self.params
        if self.kind == "interval":
            a, b = p
            if not b > a:
                raise DomainError(f"interval needs a < b, got ({a}, {b})")
        elif self.kind == "rectangle":
            if min(p) <= 0:
                raise DomainError(f"rectangle sides must be positive, got {p}")
        elif self.kind == "disk":
            if p[0] <= 0:
                raise DomainError(f"disk radius must be positive, got {p[0]}")
        elif self.kind == "ellipse":
            if min(p) <= 0:
                raise DomainError(f"ellipse semi-axes must be positive, got {p}")
        elif self.kind == "regular_polygon":
            k, r = p
            if int(k) != k or k < 3:
                raise DomainError(f"regular polygon needs an integer k >= 3, got {k}")
            if r <= 0:
                raise DomainError(f"regular polygon radius must be positive, got {r}")
        elif self.kind == "convex_polygon":
            _check_convex(np.asarray(p, dtype=float))
        elif self.kind == "stadium":
            l, r = p
            if l < 0 or r <= 0:
                raise DomainError(f"stadium needs l >= 0 and r > 0, got ({l}, {r})")

    # -- constructors -----------------------------------------------------

    @classmethod
    def interval(cls, a: float, b: float) -> "DomainSpec":
        return cls("interval", (float(a), float(b)))

    @classmethod
    def unit_square(cls) -> "DomainSpec":
        return cls("unit_square", ())

    @classmethod
    def rectangle(cls, w: float, h: float) -> "DomainSpec":
        return cls("rectangle", (float(w), float(h)))

    @classmethod
    def disk(cls, r: float = 1.0) -> "DomainSpec":
        return cls("disk", (float(r),))

    @classmethod
    def ellipse(cls, rx: float, ry: float) -> "DomainSpec":
        return cls("ellipse", (float(rx), float(ry)))

    @classmethod
    def regular_polygon(cls, k: int, r: float = 1.0) -> "DomainSpec":
        return cls("regular_polygon", (int(k), float(r)))

    @classmethod
    def convex_polygon(cls, vertices) -> "DomainSpec":
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DomainError("polygon vertices must be an (n, 2) array")
        if _signed_area(v) < 0:
            v = v[::-1]
        return cls("convex_polygon", tuple(map(tuple, v.tolist())))

    @classmethod
    def stadium(cls, l: float, r: float) -> "DomainSpec":
        return cls("stadium", (float(l), float(r)))

    @classmethod
    def parse(cls, text: str) -> "DomainSpec":
        """Parse ``kind[:key=val,...]``, e.g. ``disk:r=1`` or ``interval:a=0,b=pi``.

        Convex polygons take ``polygon:v=0 0;1 0;0 1``.
        """
        name, _, rest = text.strip().partition(":")
        name = name.lower().replace("-", "_")
        alias = {"square": "unit_square", "unitsquare": "unit_square",
                 "rect": "rectangle", "polygon": "convex_polygon",
                 "regpoly": "regular_polygon", "regularpolygon": "regular_polygon"}
        name = alias.get(name, name)
        kv = {}
        if rest:
            if name == "convex_polygon":
                verts = rest.split("=", 1)[1] if "=" in rest else rest
                pts = [[_num(t) for t in pair.split()] for pair in verts.split(";") if pair.strip()]
                return cls.convex_polygon(pts)
            for item in rest.split(","):
                k, _, v = item.partition("=")
                kv[k.strip()] = _num(v)
        if name == "interval":
            return cls.interval(kv.get("a", 0.0), kv.get("b", math.pi))
        if name == "unit_square":
            return cls.unit_square()
        if name == "rectangle":
            return cls.rectangle(kv.get("w", 1.0), kv.get("h", 1.0))
        if name == "disk":
            return cls.disk(kv.get("r", 1.0))
        if name == "ellipse":
            return cls.ellipse(kv.get("rx", 1.0), kv.get("ry", 0.6))
        if name == "regular_polygon":
            return cls.regular_polygon(int(kv.get("k", 6)), kv.get("r", 1.0))
        if name == "stadium":
            return cls.stadium(kv.get("l", 1.0), kv.get("r", 0.5))
        raise DomainError(f"cannot parse domain {text!r}")

    # -- geometry ---------------------------------------------------------

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def strictly_convex(self) -> bool:
        return self.kind in ("disk", "ellipse", "interval")

    @property
    def key(self) -> str:
        """Stable short hash identifying the domain (used for caches)."""
        text = f"{self.kind}:{self.params!r}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def area(self) -> float:
        """Exact measure of the domain (length in 1D)."""
        p = self.params
        if self.kind == "interval":
            return p[1] - p[0]
        if self.kind == "unit_square":
            return 1.0
        if self.kind == "rectangle":
            return p[0] * p[1]
        if self.kind == "disk":
            return math.pi * p[0] ** 2
        if self.kind == "ellipse":
            return math.pi * p[0] * p[1]
        if self.kind == "stadium":
            return 4 * p[0] * p[1] + math.pi * p[1] ** 2
        return _signed_area(self.vertices())

    @property
    def diameter(self) -> float:
        p = self.params
        if self.kind == "interval":
            return p[1] - p[0]
        if self.kind == "unit_square":
            return math.sqrt(2.0)
        if self.kind == "rectangle":
            return math.hypot(*p)
        if self.kind == "disk":
            return 2 * p[0]
        if self.kind == "ellipse":
            return 2 * max(p)
        if self.kind == "stadium":
            return 2 * (p[0] + p[1])
        v = self.vertices()
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=2)))

    def vertices(self) -> np.ndarray:
        """Corner list (counter-clockwise) for polygonal kinds."""
        p = self.params
        if self.kind == "unit_square":
            return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        if self.kind == "rectangle":
            w, h = p
            return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
        if self.kind == "regular_polygon":
            k, r = p
            t = 2 * np.pi * np.arange(k) / k + np.pi / 2
            return r * np.stack([np.cos(t), np.sin(t)], axis=1)
        if self.kind == "convex_polygon":
            return np.asarray(p, dtype=float)
        raise DomainError(f"{self.kind} has no vertex list")

    def boundary_offset(self, pts) -> np.ndarray:
        """Distance of each point to the analytic boundary curve.

        Exact for polygons, disk and stadium; the ellipse uses a Newton
        projection on the parametric curve.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        p = self.params
        if self.kind == "interval":
            x = pts[:, 0]
            return np.minimum(np.abs(x - p[0]), np.abs(x - p[1]))
        if self.kind == "disk":
            return np.abs(np.linalg.norm(pts, axis=1) - p[0])
        if self.kind == "stadium":
            l, r = p
            cx = np.clip(pts[:, 0], -l, l)
            return np.abs(np.hypot(pts[:, 0] - cx, pts[:, 1]) - r)
        if self.kind == "ellipse":
            return _ellipse_distance(pts, *p)
        v = self.vertices()
        return _polyline_distance(pts, np.vstack([v, v[:1]]))

    def inside_distance(self, pts) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.boundary_offset(pts)
        return np.where(self._contains(pts), d, -d)

    def _contains(self, pts) -> np.ndarray:
        p = self.params
        if self.kind == "interval":
            return (pts[:, 0] > p[0]) & (pts[:, 0] < p[1])
        if self.kind == "disk":
            return np.linalg.norm(pts, axis=1) < p[0]
        if self.kind == "ellipse":
            return (pts[:, 0] / p[0]) ** 2 + (pts[:, 1] / p[1]) ** 2 < 1.0
        if self.kind == "stadium":
            l, r = p
            cx = np.clip(pts[:, 0], -l, l)
            return np.hypot(pts[:, 0] - cx, pts[:, 1]) < r
        v = self.vertices()
        e = np.roll(v, -1, axis=0) - v
        rel = pts[:, None, :] - v[None]
        cross = e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]
        return np.all(cross > 0, axis=1)

    def boundary_points(self, h: float) -> np.ndarray:
        """Closed boundary ring (no repeated endpoint), spacing at most ~h."""
        p = self.params
        if self.kind in ("unit_square", "rectangle", "regular_polygon", "convex_polygon"):
            v = self.vertices()
            ring = []
            for a, b in zip(v, np.roll(v, -1, axis=0)):
                n = max(1, math.ceil(np.linalg.norm(b - a) / h - 1e-9))
                t = np.arange(n) / n
                ring.append(a[None] + t[:, None] * (b - a)[None])
            return np.vstack(ring)
        if self.kind == "disk":
            n = max(6, math.ceil(2 * math.pi * p[0] / h - 1e-9))
            t = 2 * np.pi * np.arange(n) / n
            return p[0] * np.stack([np.cos(t), np.sin(t)], axis=1)
        if self.kind == "stadium":
            l, r = p
            pieces = []
            n_arc = max(3, math.ceil(math.pi * r / h - 1e-9))
            n_side = max(1, math.ceil(2 * l / h - 1e-9)) if l > 0 else 0
            t = -np.pi / 2 + np.pi * np.arange(n_arc) / n_arc
            pieces.append(np.stack([l + r * np.cos(t), r * np.sin(t)], axis=1))
            if n_side:
                s = np.arange(n_side) / n_side
                pieces.append(np.stack([l - 2 * l * s, np.full(n_side, r)], axis=1))
            pieces.append(np.stack([-l - r * np.cos(t), -r * np.sin(t)], axis=1))
            if n_side:
                pieces.append(np.stack([-l + 2 * l * s, np.full(n_side, -r)], axis=1))
            return np.vstack(pieces)
        raise DomainError(f"{self.kind} has no boundary ring")

    def __str__(self) -> str:
        """Text form accepted by :meth:`parse`."""
        if self.kind == "convex_polygon":
            return "convex_polygon:v=" + ";".join(f"{x!r} {y!r}" for x, y in self.params)
        names = _PARAM_NAMES[self.kind]
        if not names:
            return self.kind
        return self.kind + ":" + ",".join(f"{n}={v!r}" for n, v in zip(names, self.params))


_PARAM_NAMES = {"interval": ("a", "b"), "unit_square": (), "rectangle": ("w", "h"),
                "disk": ("r",), "ellipse": ("rx", "ry"), "regular_polygon": ("k", "r"),
                "stadium": ("l", "r")}


def _num(text: str) -> float:
    """Float literal or ``pi``, optionally as a product or quotient (``pi/4``)."""
    parts = re.split(r"([*/])", text.strip().lower())
    value = None
    op = "*"
    for tok in parts:
        tok = tok.strip()
        if tok in ("*", "/"):
            op = tok
            continue
        sign = -1.0 if tok.startswith("-") else 1.0
        body = tok.lstrip("+-")
        try:
            x = sign * (math.pi if body == "pi" else float(body))
        except ValueError:
            raise DomainError(f"bad number {text!r}") from None
        value = x if value is None else (value * x if op == "*" else value / x)
    if value is None:
        raise DomainError(f"bad number {text!r}")
    return value


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _check_convex(v: np.ndarray) -> None:
    if v.ndim != 2 or v.shape[0] < 3:
        raise DomainError("convex polygon needs at least 3 vertices")
    diffs = np.linalg.norm(v[:, None] - v[None], axis=2) + np.eye(len(v))
    if np.any(diffs == 0.0):
        raise DomainError("convex polygon has repeated vertices")
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = np.max(np.abs(v)) ** 2
    if np.all(np.abs(cross) <= 1e-14 * scale):
        raise DomainError("polygon vertices are collinear")
    if not (np.all(cross > 1e-14 * scale) or np.all(cross < -1e-14 * scale)):
        raise DomainError("polygon is not strictly convex at every vertex")


def _polyline_distance(pts, poly) -> np.ndarray:
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    rel = pts[:, None, :] - a[None]
    t = np.clip((rel * ab[None]).sum(-1) / (ab * ab).sum(-1)[None], 0.0, 1.0)
    foot = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(pts[:, None, :] - foot, axis=2), axis=1)


def _ellipse_distance(pts, rx, ry) -> np.ndarray:
    # Newton on the parameter of the closest point, seeded from a coarse scan.
    x, y = np.abs(pts[:, 0]), np.abs(pts[:, 1])
    grid = np.linspace(0, np.pi / 2, 65)
    d2 = (x[:, None] - rx * np.cos(grid)) ** 2 + (y[:, None] - ry * np.sin(grid)) ** 2
    t = grid[np.argmin(d2, axis=1)]
    for _ in range(30):
        c, s = np.cos(t), np.sin(t)
        f = (rx * c - x) * (-rx * s) + (ry * s - y) * (ry * c)
        df = (rx * s) ** 2 + (ry * c) ** 2 - (rx * c - x) * rx * c - (ry * s - y) * ry * s
        ok = np.abs(df) > 1e-300
        step = np.divide(f, df, out=np.zeros_like(f), where=ok)
        t = np.clip(t - step, 0.0, np.pi / 2)
    return np.hypot(x - rx * np.cos(t), y - ry * np.sin(t))


# --------------------------------------------------------------------- mesh


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 mesh: nodes, cells (triangles or segments) and boundary tagging.

    Immutable after construction; derived structures are cached lazily.
    """

    nodes: np.ndarray
    cells: np.ndarray
    boundary_mask: np.ndarray
    h: float
    spec: DomainSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        mask = np.ascontiguousarray(self.boundary_mask, dtype=bool)
        for arr in (nodes, cells, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary_mask", mask)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Dense renumbering of interior nodes; -1 on boundary nodes."""
        idx = np.full(self.n_nodes, -1, dtype=np.int64)
        idx[self.interior] = np.arange(self.interior.size)
        return idx

    @cached_property
    def cell_measures(self) -> np.ndarray:
        if self.dim == 1:
            x = self.nodes[self.cells, 0]
            return x[:, 1] - x[:, 0]
        p = self.nodes[self.cells]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    @cached_property
    def adjacency(self):
        """Symmetric node-node adjacency (CSR, no self loops)."""
        k = self.cells.shape[1]
        rows = np.concatenate([self.cells[:, i] for i in range(k) for j in range(k) if i != j])
        cols = np.concatenate([self.cells[:, j] for i in range(k) for j in range(k) if i != j])
        a = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n_nodes,) * 2).tocsr()
        a.data[:] = 1.0
        return a

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges lying on the boundary (2D), as node-index pairs."""
        if self.dim == 1:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.sort(np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]],
                                    self.cells[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    @cached_property
    def buckets(self):
        nb = max(1, int(math.sqrt(self.cells.shape[0] / 2.0)))
        return kernels.build_buckets(self.nodes, self.cells, nb)

    def boundary_distance(self, pts) -> np.ndarray:
        """Distance from points to the discrete boundary (polygon or endpoints)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.dim == 1:
            lo, hi = self.nodes[:, 0].min(), self.nodes[:, 0].max()
            return np.minimum(np.abs(pts[:, 0] - lo), np.abs(pts[:, 0] - hi))
        be = self.boundary_edges
        a = self.nodes[be[:, 0]]
        b = self.nodes[be[:, 1]]
        out = np.empty(pts.shape[0])
        for s in range(0, pts.shape[0], 512):
            chunk = pts[s:s + 512]
            ab = b - a
            rel = chunk[:, None, :] - a[None]
            t = np.clip((rel * ab[None]).sum(-1) / (ab * ab).sum(-1)[None], 0.0, 1.0)
            foot = a[None] + t[..., None] * ab[None]
            out[s:s + 512] = np.min(np.linalg.norm(chunk[:, None, :] - foot, axis=2), axis=1)
        return out

    @cached_property
    def node_boundary_distance(self) -> np.ndarray:
        return self.boundary_distance(self.nodes)

    def locate(self, pts):
        """Containing cell index (-1 outside) and barycentric weights."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.dim == 1:
            x = self.nodes[:, 0]
            order = np.argsort(x)
            xs = x[order]
            q = pts[:, 0]
            k = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, xs.size - 2)
            inside = (q >= xs[0]) & (q <= xs[-1])
            t = (q - xs[k]) / (xs[k + 1] - xs[k])
            seg = {(min(a, b), max(a, b)): i for i, (a, b) in enumerate(self.cells.tolist())}
            cell = np.array([seg[(min(order[i], order[i + 1]), max(order[i], order[i + 1]))]
                             for i in k], dtype=np.int64)
            bary = np.zeros((q.size, 3))
            first = self.cells[cell, 0] == order[k]
            bary[:, 0] = np.where(first, 1 - t, t)
            bary[:, 1] = np.where(first, t, 1 - t)
            return np.where(inside, cell, -1), bary
        return kernels.locate(pts, self.nodes, self.cells, self.buckets)

    def interpolate(self, values, pts) -> np.ndarray:
        """Piecewise-linear interpolation of a nodal field; NaN outside."""
        cell, bary = self.locate(pts)
        k = self.cells.shape[1]
        idx = self.cells[np.maximum(cell, 0)]
        out = np.einsum("qk,qk->q", bary[:, :k], np.asarray(values)[idx])
        return np.where(cell >= 0, out, np.nan)

    def validate(self) -> None:
        """Raise :class:`MeshError` unless structural invariants hold."""
        if self.dim == 2 and np.any(self.cell_measures <= 0):
            raise MeshError("non-positive cell area")
        if self.dim == 1 and np.any(self.cell_measures <= 0):
            raise MeshError("segment with non-positive length")
        used = np.zeros(self.n_nodes, dtype=bool)
        used[self.cells.ravel()] = True
        if not used.all():
            raise MeshError(f"{int((~used).sum())} nodes belong to no cell")
        if self.interior.size:
            sub = self.adjacency[self.interior][:, self.interior]
            ncomp, _ = connected_components(sub, directed=False)
            if ncomp != 1:
                raise MeshError(f"interior node graph has {ncomp} components")
        if self.spec is not None:
            off = self.spec.boundary_offset(self.nodes)
            tol = 1e-12 * self.spec.diameter
            if np.any(off[self.boundary_mask] > tol):
                raise MeshError("boundary node off the analytic boundary")
            if np.any(off[~self.boundary_mask] <= tol):
                raise MeshError("node on the analytic boundary is not masked")


def build_mesh(spec: DomainSpec, h: float) -> Mesh:
    """Triangulate ``spec`` with target element size ``h``."""
    if not h > 0:
        raise DomainError(f"mesh size must be positive, got {h}")
    if spec.kind == "interval":
        a, b = spec.params
        n = max(1, math.ceil((b - a) / h - 1e-9))
        x = np.linspace(a, b, n + 1)
        cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        mask = np.zeros(n + 1, dtype=bool)
        mask[[0, -1]] = True
        mesh = Mesh(x[:, None], cells, mask, float(h), spec)
    elif spec.kind in ("unit_square", "rectangle"):
        mesh = _structured_rectangle(spec, h)
    elif spec.kind in ("disk", "ellipse"):
        mesh = _ring_mesh(spec, h)
    else:
        mesh = _lattice_mesh(spec, h)
    mesh.validate()
    return mesh


def _structured_rectangle(spec, h):
    w, hh = (1.0, 1.0) if spec.kind == "unit_square" else spec.params
    nx = max(1, math.ceil(w / h - 1e-9))
    ny = max(1, math.ceil(hh / h - 1e-9))
    xs = np.linspace(0.0, w, nx + 1)
    ys = np.linspace(0.0, hh, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    cells = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    mask = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    return Mesh(nodes, cells, mask, float(h), spec)


def _ring_mesh(spec, h):
    # Concentric rings with 6k nodes on ring k: a quasi-uniform family that
    # refines cleanly, with boundary nodes exactly on the curve.
    if spec.kind == "disk":
        rx = ry = spec.params[0]
    else:
        rx, ry = spec.params
    m = max(1, math.ceil(max(rx, ry) / h - 1e-9))
    pts = [np.zeros((1, 2))]
    for k in range(1, m + 1):
        t = 2 * np.pi * np.arange(6 * k) / (6 * k)
        pts.append((k / m) * np.stack([np.cos(t), np.sin(t)], axis=1))
    unit = np.vstack(pts)
    nodes = unit * np.array([rx, ry])
    mask = np.zeros(len(nodes), dtype=bool)
    mask[-6 * m:] = True
    # exact placement on the curve
    t = 2 * np.pi * np.arange(6 * m) / (6 * m)
    nodes[-6 * m:] = np.stack([rx * np.cos(t), ry * np.sin(t)], axis=1)
    cells = _delaunay_cells(nodes)
    return Mesh(nodes, cells, mask, float(h), spec)


def _lattice_mesh(spec, h):
    ring = spec.boundary_points(h)
    lo = ring.min(axis=0)
    hi = ring.max(axis=0)
    dy = h * math.sqrt(3) / 2
    ys = np.arange(lo[1], hi[1] + dy, dy)
    rows = []
    for j, y in enumerate(ys):
        xs = np.arange(lo[0] + (0.5 * h if j % 2 else 0.0), hi[0] + h, h)
        rows.append(np.stack([xs, np.full(xs.size, y)], axis=1))
    lattice = np.vstack(rows)
    # centre the lattice on the domain's bounding box
    lattice += 0.5 * ((hi - lo) - (lattice.max(0) - lattice.min(0)))
    keep = spec.inside_distance(lattice) > 0.5 * h
    nodes = np.vstack([ring, lattice[keep]])
    mask = np.zeros(len(nodes), dtype=bool)
    mask[: len(ring)] = True
    cells = _delaunay_cells(nodes)
    return Mesh(nodes, cells, mask, float(h), spec)


def _delaunay_cells(nodes):
    tri = Delaunay(nodes)
    cells = tri.simplices.astype(np.int64)
    p = nodes[cells]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    cells[area < 0] = cells[area < 0][:, [0, 2, 1]]
    scale = np.max(np.abs(area))
    return cells[np.abs(area) > 1e-12 * scale]


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    max_aspect: float
    h_actual: float


def mesh_quality(mesh: Mesh) -> MeshQuality:
    """Smallest interior angle (degrees), worst circumradius/(2 inradius), and
    largest cell diameter.  1D meshes report angle 180 and aspect 1.
    """
    if mesh.dim == 1:
        return MeshQuality(180.0, 1.0, float(mesh.cell_measures.max()))
    p = mesh.nodes[mesh.cells]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    cos_a = np.clip((b ** 2 + c ** 2 - a ** 2) / (2 * b * c), -1, 1)
    cos_b = np.clip((a ** 2 + c ** 2 - b ** 2) / (2 * a * c), -1, 1)
    cos_c = np.clip((a ** 2 + b ** 2 - c ** 2) / (2 * a * b), -1, 1)
    angles = np.degrees(np.arccos(np.stack([cos_a, cos_b, cos_c], axis=1)))
    area = mesh.cell_measures
    s = 0.5 * (a + b + c)
    circum = a * b * c / (4 * area)
    inrad = area / s
    return MeshQuality(float(angles.min()), float(np.max(circum / (2 * inrad))),
                       float(np.max(np.maximum(np.maximum(a, b), c))))


# ---------------------------------------------------------------------- I/O


def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"N {mesh.n_nodes}"]
    for x, b in zip(mesh.nodes, mesh.boundary_mask):
        lines.append(" ".join(repr(float(v)) for v in x) + f" {int(b)}")
    lines.append(f"T {mesh.cells.shape[0]}")
    lines.extend(" ".join(str(int(i)) for i in c) for c in mesh.cells)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, h: float | None = None, spec: DomainSpec | None = None) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    head = tokens[0].split()
    if head[0] != "N":
        raise MeshError(f"{path}: expected 'N <count>' header")
    n = int(head[1])
    rows = [t.split() for t in tokens[1:1 + n]]
    dim = len(rows[0]) - 1
    nodes = np.array([[float(v) for v in r[:dim]] for r in rows])
    mask = np.array([r[dim] == "1" for r in rows])
    thead = tokens[1 + n].split()
    if thead[0] != "T":
        raise MeshError(f"{path}: expected 'T <count>' header")
    nc = int(thead[1])
    cells = np.array([[int(v) for v in t.split()] for t in tokens[2 + n:2 + n + nc]], dtype=np.int64)
    if h is None:
        if dim == 1:
            h = float(np.max(np.abs(np.diff(nodes[cells, 0], axis=1))))
        else:
            p = nodes[cells]
            h = float(np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)))
    mesh = Mesh(nodes, cells, mask, h, spec)
    mesh.validate()
    return mesh
