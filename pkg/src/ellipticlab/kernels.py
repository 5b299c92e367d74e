"""Hot inner loops, each in a numba flavour and a vectorised numpy flavour.

The public function of each pair dispatches on ``_accel.USE_NUMBA`` at call
time, so flipping that attribute (or the ``ELLIPTICLAB_NUMBA`` environment
variable at import) changes the backend without reloading anything.  Both
flavours must agree to rounding; ``tests/test_kernels.py`` enforces it.
"""

import numpy as np

from . import _accel
from ._accel import njit


# ---------------------------------------------------------------- P1 assembly


@njit(cache=True)
def _p1_local_nb(nodes, cells):
    nc = cells.shape[0]
    kloc = np.empty((nc, 3, 3))
    mloc = np.empty((nc, 3, 3))
    b = np.empty(3)
    c = np.empty(3)
    for e in range(nc):
        i0, i1, i2 = cells[e, 0], cells[e, 1], cells[e, 2]
        x0, y0 = nodes[i0, 0], nodes[i0, 1]
        x1, y1 = nodes[i1, 0], nodes[i1, 1]
        x2, y2 = nodes[i2, 0], nodes[i2, 1]
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        area = 0.5 * det
        b[0] = (y1 - y2) / det
        b[1] = (y2 - y0) / det
        b[2] = (y0 - y1) / det
        c[0] = (x2 - x1) / det
        c[1] = (x0 - x2) / det
        c[2] = (x1 - x0) / det
        for i in range(3):
            for j in range(3):
                kloc[e, i, j] = area * (b[i] * b[j] + c[i] * c[j])
                mloc[e, i, j] = area / 12.0 * (2.0 if i == j else 1.0)
    return kloc, mloc


def _p1_local_np(nodes, cells):
    p = nodes[cells]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    area = 0.5 * det
    kloc = area[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    mref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mloc = area[:, None, None] * mref[None]
    return kloc, mloc


def p1_local_matrices(nodes, cells):
    """Element stiffness and consistent-mass blocks, shape ``(ncells, 3, 3)``."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _p1_local_nb(nodes, cells)
    return _p1_local_np(nodes, cells)


# ------------------------------------------------------------ nodal gradients


@njit(cache=True)
def _nodal_gradients_nb(nodes, cells, u):
    n = nodes.shape[0]
    acc = np.zeros((n, 2))
    wsum = np.zeros(n)
    for e in range(cells.shape[0]):
        i0, i1, i2 = cells[e, 0], cells[e, 1], cells[e, 2]
        x0, y0 = nodes[i0, 0], nodes[i0, 1]
        x1, y1 = nodes[i1, 0], nodes[i1, 1]
        x2, y2 = nodes[i2, 0], nodes[i2, 1]
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        gx = (u[i0] * (y1 - y2) + u[i1] * (y2 - y0) + u[i2] * (y0 - y1)) / det
        gy = (u[i0] * (x2 - x1) + u[i1] * (x0 - x2) + u[i2] * (x1 - x0)) / det
        area = 0.5 * det
        for k in range(3):
            idx = cells[e, k]
            acc[idx, 0] += area * gx
            acc[idx, 1] += area * gy
            wsum[idx] += area
    for i in range(n):
        if wsum[i] > 0.0:
            acc[i, 0] /= wsum[i]
            acc[i, 1] /= wsum[i]
    return acc


def _nodal_gradients_np(nodes, cells, u):
    p = nodes[cells]
    x, y = p[..., 0], p[..., 1]
    uc = u[cells]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    gx = (uc[:, 0] * (y[:, 1] - y[:, 2]) + uc[:, 1] * (y[:, 2] - y[:, 0]) + uc[:, 2] * (y[:, 0] - y[:, 1])) / det
    gy = (uc[:, 0] * (x[:, 2] - x[:, 1]) + uc[:, 1] * (x[:, 0] - x[:, 2]) + uc[:, 2] * (x[:, 1] - x[:, 0])) / det
    area = 0.5 * det
    n = nodes.shape[0]
    flat = cells.ravel()
    wsum = np.bincount(flat, weights=np.repeat(area, 3), minlength=n)
    ax = np.bincount(flat, weights=np.repeat(area * gx, 3), minlength=n)
    ay = np.bincount(flat, weights=np.repeat(area * gy, 3), minlength=n)
    out = np.stack([ax, ay], axis=1)
    nz = wsum > 0
    out[nz] /= wsum[nz, None]
    return out


def nodal_gradients(nodes, cells, u):
    """Area-weighted average of per-cell P1 gradients at every node (2D)."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _nodal_gradients_nb(nodes, cells, u)
    return _nodal_gradients_np(nodes, cells, u)


# ----------------------------------------------- point location / P1 interp


def build_buckets(nodes, cells, nb):
    """Uniform bucket grid over the bounding box; CSR list of cells per bucket."""
    lo = nodes.min(axis=0)
    hi = nodes.max(axis=0)
    span = np.maximum(hi - lo, 1e-300)
    p = nodes[cells]
    cmin = np.floor((p.min(axis=1) - lo) / span * nb).astype(np.int64).clip(0, nb - 1)
    cmax = np.floor((p.max(axis=1) - lo) / span * nb).astype(np.int64).clip(0, nb - 1)
    ext = cmax - cmin
    owners = []
    buckets = []
    ids = np.arange(cells.shape[0], dtype=np.int64)
    for di in range(int(ext[:, 0].max()) + 1):
        for dj in range(int(ext[:, 1].max()) + 1):
            sel = (ext[:, 0] >= di) & (ext[:, 1] >= dj)
            buckets.append((cmin[sel, 0] + di) * nb + cmin[sel, 1] + dj)
            owners.append(ids[sel])
    buckets = np.concatenate(buckets)
    owners = np.concatenate(owners)
    order = np.argsort(buckets * cells.shape[0] + owners, kind="stable")
    buckets, owners = buckets[order], owners[order]
    ptr = np.zeros(nb * nb + 1, dtype=np.int64)
    np.add.at(ptr, buckets + 1, 1)
    ptr = np.cumsum(ptr)
    return lo, span, ptr, owners


@njit(cache=True)
def _locate_nb(points, nodes, cells, lo, span, nb, ptr, owners, tol):
    m = points.shape[0]
    cell_of = np.full(m, -1, dtype=np.int64)
    bary = np.zeros((m, 3))
    for q in range(m):
        px, py = points[q, 0], points[q, 1]
        bi = int(np.floor((px - lo[0]) / span[0] * nb))
        bj = int(np.floor((py - lo[1]) / span[1] * nb))
        if bi < 0 or bj < 0 or bi >= nb or bj >= nb:
            if bi == nb:
                bi = nb - 1
            if bj == nb:
                bj = nb - 1
            if bi < 0 or bj < 0 or bi >= nb or bj >= nb:
                continue
        bucket = bi * nb + bj
        for k in range(ptr[bucket], ptr[bucket + 1]):
            e = owners[k]
            i0, i1, i2 = cells[e, 0], cells[e, 1], cells[e, 2]
            x0, y0 = nodes[i0, 0], nodes[i0, 1]
            x1, y1 = nodes[i1, 0], nodes[i1, 1]
            x2, y2 = nodes[i2, 0], nodes[i2, 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / det
            l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / det
            l0 = 1.0 - l1 - l2
            if l0 >= -tol and l1 >= -tol and l2 >= -tol:
                cell_of[q] = e
                bary[q, 0] = l0
                bary[q, 1] = l1
                bary[q, 2] = l2
                break
    return cell_of, bary


def _locate_np(points, nodes, cells, lo, span, nb, ptr, owners, tol):
    m = points.shape[0]
    bij = np.floor((points - lo) / span * nb).astype(np.int64)
    bij[bij == nb] = nb - 1
    inside = np.all((bij >= 0) & (bij < nb), axis=1)
    bucket = np.where(inside, bij[:, 0] * nb + bij[:, 1], 0)
    counts = np.where(inside, ptr[bucket + 1] - ptr[bucket], 0)
    kmax = int(counts.max()) if m else 0
    cell_of = np.full(m, -1, dtype=np.int64)
    bary = np.zeros((m, 3))
    if kmax == 0:
        return cell_of, bary
    slot = np.arange(kmax)
    valid = slot[None, :] < counts[:, None]
    cand = owners[np.where(valid, ptr[bucket][:, None] + slot[None, :], 0)]
    p = nodes[cells[cand]]
    x0, y0 = p[..., 0, 0], p[..., 0, 1]
    x1, y1 = p[..., 1, 0], p[..., 1, 1]
    x2, y2 = p[..., 2, 0], p[..., 2, 1]
    px, py = points[:, 0:1], points[:, 1:2]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / det
    l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / det
    l0 = 1.0 - l1 - l2
    hit = valid & (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
    found = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    rows = np.nonzero(found)[0]
    k = first[rows]
    cell_of[rows] = cand[rows, k]
    bary[rows, 0] = l0[rows, k]
    bary[rows, 1] = l1[rows, k]
    bary[rows, 2] = l2[rows, k]
    return cell_of, bary


def locate(points, nodes, cells, buckets, tol=1e-12):
    """Containing cell (or -1) and barycentric coordinates for each point."""
    lo, span, ptr, owners = buckets
    nb = int(round(np.sqrt(ptr.size - 1)))
    points = np.ascontiguousarray(points, dtype=np.float64)
    args = (points, np.ascontiguousarray(nodes, dtype=np.float64),
            np.ascontiguousarray(cells, dtype=np.int64), lo, span, nb, ptr, owners, tol)
    if _accel.USE_NUMBA:
        return _locate_nb(*args)
    return _locate_np(*args)


# ------------------------------------------------- local quadratic fitting


@njit(cache=True)
def _quadfit_nb(coords, values, centers, ptr, idx):
    m = centers.shape[0]
    dim = coords.shape[1]
    nbasis = 3 if dim == 1 else 6
    hess = np.zeros((m, dim, dim))
    resid = np.zeros(m)
    ok = np.zeros(m, dtype=np.bool_)
    for q in range(m):
        c = centers[q]
        start, stop = ptr[q], ptr[q + 1]
        k = stop - start
        if k < nbasis:
            continue
        d = np.empty((k, dim))
        r = np.empty(k)
        for t in range(k):
            j = idx[start + t]
            s = 0.0
            for a in range(dim):
                d[t, a] = coords[j, a] - coords[c, a]
                s += d[t, a] * d[t, a]
            r[t] = np.sqrt(s)
        scale = 0.0
        cnt = 0
        for t in range(k):
            if r[t] > 0.0:
                scale += r[t]
                cnt += 1
        if cnt == 0:
            continue
        scale /= cnt
        basis = np.empty((k, nbasis))
        w = np.empty(k)
        for t in range(k):
            basis[t, 0] = 1.0
            if dim == 1:
                xs = d[t, 0] / scale
                basis[t, 1] = xs
                basis[t, 2] = 0.5 * xs * xs
            else:
                xs = d[t, 0] / scale
                ys = d[t, 1] / scale
                basis[t, 1] = xs
                basis[t, 2] = ys
                basis[t, 3] = 0.5 * xs * xs
                basis[t, 4] = xs * ys
                basis[t, 5] = 0.5 * ys * ys
            w[t] = 1.0 / (r[t] / scale + 1.0)
        normal = np.zeros((nbasis, nbasis))
        rhs = np.zeros(nbasis)
        for t in range(k):
            v = values[idx[start + t]]
            for a in range(nbasis):
                rhs[a] += w[t] * basis[t, a] * v
                for b in range(nbasis):
                    normal[a, b] += w[t] * basis[t, a] * basis[t, b]
        ev = np.linalg.eigvalsh(normal)
        if ev[0] <= 1e-12 * ev[-1]:
            continue
        coef = np.linalg.solve(normal, rhs)
        ss = 0.0
        for t in range(k):
            fit = 0.0
            for a in range(nbasis):
                fit += basis[t, a] * coef[a]
            e = values[idx[start + t]] - fit
            ss += e * e
        resid[q] = np.sqrt(ss / k)
        inv2 = 1.0 / (scale * scale)
        if dim == 1:
            hess[q, 0, 0] = coef[2] * inv2
        else:
            hess[q, 0, 0] = coef[3] * inv2
            hess[q, 0, 1] = coef[4] * inv2
            hess[q, 1, 0] = coef[4] * inv2
            hess[q, 1, 1] = coef[5] * inv2
        ok[q] = True
    return hess, resid, ok


def _quadfit_np(coords, values, centers, ptr, idx):
    m = centers.shape[0]
    dim = coords.shape[1]
    nbasis = 3 if dim == 1 else 6
    counts = np.diff(ptr)
    kmax = int(counts.max()) if m else 0
    hess = np.zeros((m, dim, dim))
    resid = np.zeros(m)
    ok = np.zeros(m, dtype=bool)
    if kmax == 0:
        return hess, resid, ok
    slot = np.arange(kmax)
    valid = slot[None, :] < counts[:, None]
    nbr = idx[np.where(valid, ptr[:-1, None] + slot[None, :], 0)]
    d = coords[nbr] - coords[centers][:, None, :]
    r = np.sqrt((d * d).sum(axis=2))
    pos = valid & (r > 0)
    cnt = pos.sum(axis=1)
    scale = np.where(cnt > 0, np.where(pos, r, 0).sum(axis=1) / np.maximum(cnt, 1), 1.0)
    ds = d / scale[:, None, None]
    one = np.ones(r.shape)
    if dim == 1:
        xs = ds[..., 0]
        basis = np.stack([one, xs, 0.5 * xs * xs], axis=2)
    else:
        xs, ys = ds[..., 0], ds[..., 1]
        basis = np.stack([one, xs, ys, 0.5 * xs * xs, xs * ys, 0.5 * ys * ys], axis=2)
    w = np.where(valid, 1.0 / (r / scale[:, None] + 1.0), 0.0)
    v = np.where(valid, values[nbr], 0.0)
    normal = np.einsum("qt,qta,qtb->qab", w, basis, basis)
    rhs = np.einsum("qt,qta,qt->qa", w, basis, v)
    usable = (counts >= nbasis) & (cnt > 0)
    normal[~usable] = np.eye(nbasis)
    ev = np.linalg.eigvalsh(normal)
    usable &= ev[:, 0] > 1e-12 * ev[:, -1]
    normal[~usable] = np.eye(nbasis)
    coef = np.linalg.solve(normal, rhs[..., None])[..., 0]
    fit = np.einsum("qta,qa->qt", basis, coef)
    err = np.where(valid, v - fit, 0.0)
    resid = np.sqrt((err * err).sum(axis=1) / np.maximum(counts, 1))
    inv2 = 1.0 / scale ** 2
    if dim == 1:
        hess[:, 0, 0] = coef[:, 2] * inv2
    else:
        hess[:, 0, 0] = coef[:, 3] * inv2
        hess[:, 0, 1] = hess[:, 1, 0] = coef[:, 4] * inv2
        hess[:, 1, 1] = coef[:, 5] * inv2
    hess[~usable] = 0.0
    resid[~usable] = 0.0
    return hess, resid, usable


def quadratic_fit_hessians(coords, values, centers, ptr, idx):
    """Weighted least-squares quadratic fit around each centre node.

    ``ptr``/``idx`` is a CSR list: neighbourhood of ``centers[q]`` is
    ``idx[ptr[q]:ptr[q+1]]`` (centre included).  Returns per-centre Hessians,
    RMS fit residuals and a mask of non-degenerate fits.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    args = (coords, np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(centers, dtype=np.int64),
            np.ascontiguousarray(ptr, dtype=np.int64), np.ascontiguousarray(idx, dtype=np.int64))
    if _accel.USE_NUMBA:
        return _quadfit_nb(*args)
    return _quadfit_np(*args)
