"""P1 finite elements for the Dirichlet Laplacian: assembly, solves, eigenpairs.

Fields are plain float arrays over *all* mesh nodes; Dirichlet fields carry
exact zeros on boundary nodes.  Operators act on the interior block.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .domain import Mesh

DIRECT_LIMIT = 200_000
EIG_RESIDUAL = 1e-8


class SolverError(RuntimeError):
    """A linear or eigen solve failed to reach its tolerance."""


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Stiffness/mass pair restricted to interior nodes, plus full versions.

    ``K_full``/``M_full`` include boundary rows and columns; ``K``/``M`` are
    the interior blocks used by every solve.  Factorizations are cached.
    """

    mesh: Mesh
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    _shift_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @cached_property
    def K(self) -> sp.csr_matrix:
        i = self.mesh.interior
        return self.K_full[i][:, i].tocsr()

    @cached_property
    def M(self) -> sp.csr_matrix:
        i = self.mesh.interior
        return self.M_full[i][:, i].tocsr()

    @cached_property
    def lumped(self) -> np.ndarray:
        return np.asarray(self.M_full.sum(axis=1)).ravel()

    @property
    def n_interior(self) -> int:
        return self.mesh.interior.size

    def load(self, f) -> np.ndarray:
        """Interior load vector of a nodal source: rows of ``M_full @ f``."""
        return (self.M_full @ np.asarray(f, dtype=float))[self.mesh.interior]

    def to_full(self, u_int) -> np.ndarray:
        out = np.zeros(self.mesh.n_nodes)
        out[self.mesh.interior] = u_int
        return out

    def inner(self, u, v) -> float:
        """L2 inner product of two nodal fields (consistent mass)."""
        return float(np.asarray(u) @ (self.M_full @ np.asarray(v)))

    def shifted_solver(self, shift: float):
        """Callable solving ``(K - shift*M) x = b`` on the interior block."""
        key = float(shift)
        with self._lock:
            solve = self._shift_cache.get(key)
            if solve is None:
                A = (self.K - key * self.M).tocsc() if key else self.K.tocsc()
                if self.n_interior <= DIRECT_LIMIT:
                    solve = spla.splu(A).solve
                else:
                    solve = _cg_solver(A, key)
                if len(self._shift_cache) > 32:
                    self._shift_cache.clear()
                self._shift_cache[key] = solve
            return solve

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_shift_cache"] = {}
        state.pop("_lock", None)
        return state

    def __setstate__(self, state):
        state["_lock"] = threading.Lock()
        self.__dict__.update(state)


def _cg_solver(A, shift):
    if shift > 0:
        raise SolverError("indefinite shifted systems above the direct-solve limit are unsupported")
    diag = A.diagonal()
    pre = spla.LinearOperator(A.shape, matvec=lambda x: x / diag)

    def solve(b):
        x, info = spla.cg(A, b, rtol=1e-13, atol=0.0, maxiter=20 * A.shape[0], M=pre)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
            raise SolverError(f"CG did not converge (info={info}, residual={res:.3e})")
        return x

    return solve


def assemble(mesh: Mesh) -> DiscreteOperators:
    """Global P1 stiffness and consistent mass matrices."""
    n = mesh.n_nodes
    if mesh.dim == 1:
        length = mesh.cell_measures
        kloc = (np.array([[1.0, -1.0], [-1.0, 1.0]])[None] / length[:, None, None])
        mloc = (np.array([[2.0, 1.0], [1.0, 2.0]])[None] * length[:, None, None] / 6.0)
    else:
        kloc, mloc = kernels.p1_local_matrices(mesh.nodes, mesh.cells)
    k = mesh.cells.shape[1]
    rows = np.repeat(mesh.cells, k, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, k)).ravel()
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    M.sum_duplicates()
    return DiscreteOperators(mesh, K, M)


def solve_dirichlet(ops: DiscreteOperators, rhs) -> np.ndarray:
    """Solve ``-Δu = rhs`` with zero boundary values; returns a full nodal field."""
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("right-hand side has non-finite entries")
    b = ops.load(rhs)
    if not np.any(b):
        return np.zeros(ops.mesh.n_nodes)
    u = ops.shifted_solver(0.0)(b)
    res = np.linalg.norm(ops.K @ u - b) / np.linalg.norm(b)
    if res > 1e-10:
        raise SolverError(f"Dirichlet solve residual {res:.3e} above 1e-10")
    return ops.to_full(u)


# ------------------------------------------------------------------ spectra


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Principal eigenpair with L2-normalised positive eigenfunction, and λ₂.

    ``phi2`` is a unit eigenvector for λ₂, M-orthogonal to ``phi1``.
    """

    lambda1: float
    phi1: np.ndarray
    lambda2: float
    phi2: np.ndarray
    ops: DiscreteOperators = field(repr=False)
    iterations: tuple = (0, 0)

    @property
    def gap(self) -> float:
        return self.lambda2 - self.lambda1

    @cached_property
    def l1_norm(self) -> float:
        return float(self.ops.lumped @ self.phi1)

    @cached_property
    def sup_norm(self) -> float:
        return float(self.phi1.max())

    @cached_property
    def l2_norm_sq(self) -> float:
        return self.ops.inner(self.phi1, self.phi1)

    def project_out(self, w) -> np.ndarray:
        """Remove the φ₁ component of a field in the M inner product."""
        w = np.asarray(w, dtype=float)
        return w - self.ops.inner(self.phi1, w) / self.l2_norm_sq * self.phi1


def _m_normalize(M, x):
    return x / np.sqrt(x @ (M @ x))


def principal_eigenpair(ops: DiscreteOperators, seed: int | None = None,
                        tol: float = 1e-12, maxiter: int = 500) -> SpectralData:
    """λ₁ by inverse iteration; λ₂ by block inverse iteration deflated against φ₁.

    Iteration stops when the relative eigenvalue change is at most ``tol``
    and the eigen-residual is below ``EIG_RESIDUAL`` relative.
    """
    K, M = ops.K, ops.M
    n = ops.n_interior
    if n == 0:
        raise SolverError("mesh has no interior nodes")
    solve = ops.shifted_solver(0.0)
    if seed is None:
        x = np.ones(n)
    else:
        x = np.random.default_rng(seed).random(n) + 0.5
    x = _m_normalize(M, x)
    lam = float(x @ (K @ x))
    it1 = 0
    for it1 in range(1, maxiter + 1):
        y = _m_normalize(M, solve(M @ x))
        Ky, My = K @ y, M @ y
        new = float(y @ Ky)
        res = np.linalg.norm(Ky - new * My) / (new * np.linalg.norm(My))
        done = abs(new - lam) <= tol * new and res <= EIG_RESIDUAL
        x, lam = y, new
        if done:
            break
    else:
        raise SolverError(f"principal eigenpair not converged in {maxiter} iterations "
                          f"(residual {res:.3e})")
    if x.sum() < 0:
        x = -x
    if np.any(x <= 0):
        raise SolverError("principal eigenvector is not positive on interior nodes")
    phi1 = x

    block = min(3, n - 1)
    if block < 1:
        raise SolverError("too few interior nodes for a second eigenvalue")
    rng = np.random.default_rng(12345 if seed is None else seed + 1)
    X = rng.standard_normal((n, block))
    Mphi = M @ phi1
    X -= np.outer(phi1, Mphi @ X)
    theta_old = np.inf
    it2 = 0
    for it2 in range(1, maxiter + 1):
        Y = solve(M @ X)
        Y -= np.outer(phi1, Mphi @ Y)
        Kr = Y.T @ (K @ Y)
        Mr = Y.T @ (M @ Y)
        theta, C = _ritz(Kr, Mr)
        X = Y @ C
        v = X[:, 0]
        Kv, Mv = K @ v, M @ v
        res = np.linalg.norm(Kv - theta[0] * Mv) / (theta[0] * np.linalg.norm(Mv))
        if abs(theta[0] - theta_old) <= tol * theta[0] and res <= EIG_RESIDUAL:
            break
        theta_old = theta[0]
    else:
        raise SolverError(f"second eigenvalue not converged in {maxiter} iterations")
    phi2 = _m_normalize(M, X[:, 0])
    phi2 -= (Mphi @ phi2) * phi1
    phi2 = _m_normalize(M, phi2)
    lam2 = float(phi2 @ (K @ phi2))
    if not lam2 > lam:
        raise SolverError(f"spectral gap not positive: λ1={lam}, λ2={lam2}")
    return SpectralData(lam, ops.to_full(phi1), lam2, ops.to_full(phi2), ops, (it1, it2))


def _ritz(Kr, Mr):
    from scipy.linalg import eigh

    Kr = 0.5 * (Kr + Kr.T)
    Mr = 0.5 * (Mr + Mr.T)
    theta, C = eigh(Kr, Mr)
    return theta, C


class ZeroProjectionError(ValueError):
    """Field has no component orthogonal to φ₁."""


def rayleigh_gap_check(ops: DiscreteOperators, spectral: SpectralData, w) -> float:
    """Rayleigh quotient of ``w`` after M-orthogonal projection against φ₁.

    Callers assert the returned value is at least λ₂ (up to tolerance).
    """
    w = np.asarray(w, dtype=float).copy()
    w[ops.mesh.boundary_mask] = 0.0
    scale = np.sqrt(max(ops.inner(w, w), 0.0))
    v = spectral.project_out(w)
    mass = ops.inner(v, v)
    if scale == 0.0 or mass <= (1e-12 * scale) ** 2:
        raise ZeroProjectionError("field vanishes after projection against φ₁")
    return float(v @ (ops.K_full @ v)) / mass


def hopf_margin(spectral: SpectralData) -> float:
    """Min of φ₁/distance-to-boundary over interior nodes touching the boundary."""
    mesh = spectral.ops.mesh
    adj = mesh.adjacency
    touches = np.asarray(adj[:, mesh.boundary_mask].sum(axis=1)).ravel() > 0
    nodes = np.flatnonzero(touches & ~mesh.boundary_mask)
    if nodes.size == 0:
        raise SolverError("no interior node is adjacent to the boundary")
    d = mesh.node_boundary_distance[nodes]
    return float(np.min(spectral.phi1[nodes] / d))


# ----------------------------------------------------------------- field I/O


def write_field(values, path) -> None:
    values = np.asarray(values, dtype=float)
    body = "\n".join(repr(float(v)) for v in values)
    Path(path).write_text(f"{values.size}\n{body}\n")


def read_field(path) -> np.ndarray:
    lines = Path(path).read_text().split()
    n = int(lines[0])
    values = np.array([float(t) for t in lines[1:1 + n]])
    if values.size != n:
        raise ValueError(f"{path}: expected {n} values, found {values.size}")
    return values


class EigenCache:
    """On-disk cache of spectral data keyed by (domain hash, h)."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, spec_key: str, h: float) -> Path:
        return self.directory / f"eig_{spec_key}_{float(h).hex()}.npz"

    def load(self, spec_key: str, h: float, ops: DiscreteOperators) -> SpectralData | None:
        p = self.path(spec_key, h)
        if not p.exists():
            return None
        with np.load(p) as z:
            if z["phi1"].size != ops.mesh.n_nodes:
                return None
            return SpectralData(float(z["lambda1"]), z["phi1"].copy(), float(z["lambda2"]),
                                z["phi2"].copy(), ops, tuple(int(i) for i in z["iterations"]))

    def store(self, spec_key: str, h: float, spectral: SpectralData) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        np.savez(self.path(spec_key, h), lambda1=spectral.lambda1, phi1=spectral.phi1,
                 lambda2=spectral.lambda2, phi2=spectral.phi2,
                 iterations=np.array(spectral.iterations))
