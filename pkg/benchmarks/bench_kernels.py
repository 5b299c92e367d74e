"""Time each hot kernel under the numba and numpy backends.

Usage: python benchmarks/bench_kernels.py [--h 0.01] [--repeat 5]

The first numba call is a warm-up (compilation or cache load) and is not
timed.  Results are printed as a small table; both backends are checked to
agree before timing.
"""

import argparse
import time

import numpy as np

from ellipticlab import _accel, kernels
from ellipticlab.concavity import admissible_nodes, two_ring
from ellipticlab.domain import DomainSpec, build_mesh


def _cases(mesh, rng):
    u = np.sin(np.pi * mesh.nodes[:, 0]) * np.sin(np.pi * mesh.nodes[:, 1])
    pts = rng.random((20_000, 2))
    centers = admissible_nodes(mesh, 3 * mesh.h)
    ptr, idx = two_ring(mesh, centers)
    return {
        "p1_local_matrices": lambda: kernels.p1_local_matrices(mesh.nodes, mesh.cells),
        "nodal_gradients": lambda: kernels.nodal_gradients(mesh.nodes, mesh.cells, u),
        "locate": lambda: kernels.locate(pts, mesh.nodes, mesh.cells, mesh.buckets),
        "quadratic_fit_hessians": lambda: kernels.quadratic_fit_hessians(
            mesh.nodes, u, centers, ptr, idx),
    }


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def _flatten(out):
    if isinstance(out, tuple):
        return [np.asarray(o, dtype=float).ravel() for o in out]
    return [np.asarray(out, dtype=float).ravel()]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or disabled by ELLIPTICLAB_NUMBA=0)")
    mesh = build_mesh(DomainSpec.unit_square(), args.h)
    cases = _cases(mesh, np.random.default_rng(0))
    print(f"unit square, h={args.h}: {mesh.n_nodes} nodes, {mesh.cells.shape[0]} cells")
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    try:
        for name, fn in cases.items():
            _accel.USE_NUMBA = True
            ref = _flatten(fn())
            t_nb = _best(fn, args.repeat)
            _accel.USE_NUMBA = False
            alt = _flatten(fn())
            t_np = _best(fn, args.repeat)
            for a, b in zip(ref, alt):
                np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
            print(f"{name:<24}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")
    finally:
        _accel.USE_NUMBA = _accel.HAVE_NUMBA


if __name__ == "__main__":
    main()
