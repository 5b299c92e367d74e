import math

import pytest

from ellipticlab.domain import DomainSpec
from ellipticlab.experiments import Workspace

# Reference values computed once with mpmath (30 digits) and frozen here.
J01_SQ = 5.78318596294678452
J11_SQ = 14.6819706421238933
DISK_HOPF = 1.35677752990137880          # j01 / sqrt(pi)
SINE_3_2 = 1.74803836952807987          # integral of sin^{3/2} over (0, pi)
B_SQRT = 1.55210860554539463            # limit coefficient, interval (0, pi), g = sqrt, c = 1
IDENTITY_PHI1 = 0.0122918254176540140   # |eps - delta * int sqrt(phi1) phi1|, eps = delta = -0.05


def smooth_test_field(d, rng):
    """Random field dominated by low modes: φ₁, φ₂ and φ₁ times a random quadratic."""
    x = d.mesh.nodes
    c = rng.standard_normal(6)
    poly = c[0] * x[:, 0] + c[1] * x[:, 1] + c[2] * x[:, 0] ** 2 + c[3] * x[:, 0] * x[:, 1]
    sd = d.spectral
    return c[4] * sd.phi1 + sd.phi2 + 0.2 * c[5] * sd.phi1 * poly


@pytest.fixture(scope="session")
def ws():
    return Workspace()


@pytest.fixture(scope="session")
def square(ws):
    return ws.get(DomainSpec.unit_square(), 0.05)


@pytest.fixture(scope="session")
def disk(ws):
    return ws.get(DomainSpec.disk(1.0), 0.05)


@pytest.fixture(scope="session")
def line(ws):
    return ws.get(DomainSpec.interval(0.0, math.pi), math.pi / 200)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
