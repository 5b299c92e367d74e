"""Catalogue of sublinear nonlinearities g(x, s, p) ≥ 0."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

S_LATTICE = np.logspace(-6, 3, 271)
GRAD_SAMPLES = np.array([0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0])

_FAMILIES = {
    "powerplus": ("a0", "r", "b0"),
    "logpower": ("a0", "b0", "r"),
    "logplus": ("a0", "r", "b0"),
    "bounded": ("g0", "cap"),
}


@dataclass(frozen=True)
class Nonlinearity:
    """One catalogue member.

    ``powerplus``: a0*s**r + b0 (0 < r < 1)
    ``logpower``:  a0*log(1 + b0*s**r)
    ``logplus``:   log(1 + a0*s**r) + b0
    ``bounded``:   g0 + cap*s/(1 + s)

    ``kappa > 0`` multiplies by the bounded gradient factor
    1 + kappa*|p|^2/(1 + |p|^2).
    """

    family: str
    params: tuple
    kappa: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown nonlinearity family {self.family!r}")
        names = _FAMILIES[self.family]
        if len(self.params) != len(names):
            raise ValueError(f"{self.family} takes parameters {names}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        p = dict(zip(names, self.params))
        if self.family == "powerplus" and not (p["a0"] > 0 and 0 < p["r"] < 1 and p["b0"] >= 0):
            raise ValueError(f"powerplus needs a0 > 0, 0 < r < 1, b0 >= 0; got {p}")
        if self.family == "logpower" and not (p["a0"] > 0 and p["b0"] > 0 and 0 < p["r"] < 1):
            raise ValueError(f"logpower needs a0, b0 > 0 and 0 < r < 1; got {p}")
        if self.family == "logplus" and not (p["a0"] >= 0 and p["r"] > 0 and p["b0"] >= 0):
            raise ValueError(f"logplus needs a0 >= 0, r > 0, b0 >= 0; got {p}")
        if self.family == "bounded" and not (p["g0"] > 0 and p["cap"] >= 0):
            raise ValueError(f"bounded needs g0 > 0, cap >= 0; got {p}")

    @classmethod
    def power(cls, r: float = 0.5, a0: float = 1.0, b0: float = 0.0, kappa: float = 0.0):
        return cls("powerplus", (float(a0), float(r), float(b0)), float(kappa))

    @classmethod
    def log_plus(cls, a0: float = 1.0, r: float = 0.5, b0: float = 0.1, kappa: float = 0.0):
        return cls("logplus", (float(a0), float(r), float(b0)), float(kappa))

    @classmethod
    def parse(cls, text: str) -> "Nonlinearity":
        """``powerplus:a0=1,r=0.5,b0=0[,kappa=0.1]`` and friends."""
        name, _, rest = text.strip().partition(":")
        name = name.strip().lower()
        if name not in _FAMILIES:
            raise ValueError(f"unknown nonlinearity family {name!r}")
        kv = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            k, _, v = item.partition("=")
            kv[k.strip()] = float(v)
        kappa = kv.pop("kappa", 0.0)
        try:
            params = tuple(kv.pop(n) for n in _FAMILIES[name])
        except KeyError as exc:
            raise ValueError(f"{name} needs parameters {_FAMILIES[name]}") from exc
        if kv:
            raise ValueError(f"unexpected parameters {sorted(kv)} for {name}")
        return cls(name, params, kappa)

    def __str__(self) -> str:
        body = ",".join(f"{n}={v!r}" for n, v in zip(_FAMILIES[self.family], self.params))
        if self.kappa:
            body += f",kappa={self.kappa!r}"
        return f"{self.family}:{body}"

    @property
    def gradient_dependent(self) -> bool:
        return self.kappa > 0

    def __call__(self, s, grad=None, x=None) -> np.ndarray:
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        fam, p = self.family, self.params
        if fam == "powerplus":
            a0, r, b0 = p
            out = a0 * s ** r + b0
        elif fam == "logpower":
            a0, b0, r = p
            out = a0 * np.log1p(b0 * s ** r)
        elif fam == "logplus":
            a0, r, b0 = p
            out = np.log1p(a0 * s ** r) + b0
        else:
            g0, cap = p
            out = g0 + cap * s / (1.0 + s)
        if self.kappa and grad is not None:
            q = np.asarray(grad, dtype=float)
            q2 = q * q if q.ndim <= 1 else (q * q).sum(axis=-1)
            out = out * (1.0 + self.kappa * q2 / (1.0 + q2))
        return out

    def scalar(self, s: float) -> float:
        """Gradient-free value at a single point, without numpy overhead."""
        s = max(s, 0.0)
        fam, p = self.family, self.params
        if fam == "powerplus":
            return p[0] * s ** p[1] + p[2]
        if fam == "logpower":
            return p[0] * math.log1p(p[1] * s ** p[2])
        if fam == "logplus":
            return math.log1p(p[0] * s ** p[1]) + p[2]
        return p[0] + p[1] * s / (1.0 + s)

    def sup_factor(self) -> float:
        """Largest value of the gradient factor."""
        return 1.0 + self.kappa


def check_hypotheses(g: Nonlinearity, s=S_LATTICE, grads=GRAD_SAMPLES) -> dict:
    """Sampled positivity and monotonicity checks plus the two ratio limits."""
    vals = np.stack([g(s, np.full(s.size, q)) for q in grads])
    lo = np.stack([g(np.array([1e-6]), np.array([q])) for q in grads])[:, 0]
    hi = np.stack([g(np.array([1e3]), np.array([q])) for q in grads])[:, 0]
    return {
        "positive": bool(np.all(vals > 0)),
        "nondecreasing": bool(np.all(np.diff(vals, axis=1) >= 0)),
        "ratio_limits": bool(np.all(lo / 1e-6 > 1e3 * hi / 1e3)),
    }


def ratio_decreasing(g: Nonlinearity, s=S_LATTICE) -> bool:
    """Sampled check that s -> g(s)/s is strictly decreasing (p-independent g)."""
    r = g(s) / s
    return bool(np.all(np.diff(r) < 0))


def envelope_sup(g: Nonlinearity, slope: float, s=S_LATTICE, grads=GRAD_SAMPLES) -> float:
    """sup over the lattice of g(s, p) - slope*s, extending the lattice upward
    while the maximum sits on its top end.
    """
    lattice = np.asarray(s, dtype=float)
    for _ in range(12):
        vals = np.max(np.stack([g(lattice, np.full(lattice.size, q)) for q in grads]), axis=0)
        f = vals - slope * lattice
        k = int(np.argmax(f))
        if k < lattice.size - 1:
            return float(max(f[k], vals[0] - slope * lattice[0], g(np.zeros(1))[0]))
        lattice = np.concatenate([lattice, lattice[-1] * np.logspace(0, 1, 31)[1:]])
    raise ValueError(f"no finite envelope for {g} with slope {slope}")


def lower_threshold(g: Nonlinearity, slope: float, s=S_LATTICE, grads=GRAD_SAMPLES) -> float:
    """Largest s0 such that g(s, p) >= slope*s for every sampled s <= s0.

    The lattice answer is refined by bisection between the last passing and
    the first failing sample.
    """
    lattice = np.asarray(s, dtype=float)

    def margin(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.min(np.stack([g(x, np.full(x.size, q)) for q in grads]), axis=0) - slope * x

    ok = margin(lattice) >= 0
    if not ok[0]:
        raise ValueError(f"{g} falls below {slope}*s already at s={lattice[0]:g}")
    if ok.all():
        return float(lattice[-1])
    k = int(np.argmin(ok))
    lo, hi = lattice[k - 1], lattice[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if margin(mid)[0] >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return float(lo)


def dyadic_floor(x: float) -> float:
    return 2.0 ** math.floor(math.log2(x))


def dyadic_ceil(x: float) -> float:
    return 2.0 ** math.ceil(math.log2(x))
