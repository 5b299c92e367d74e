"""Finite-element experiments for semilinear Dirichlet problems near the
principal eigenvalue: eigenpairs, shifted resolvents, fixed-point solvers and
concavity diagnostics.
"""

from ._accel import backend
from .concavity import (ConcavityReport, Transform, concavity_function_scan, hessian_field,
                        log_concavity_report, power_concavity, quasi_concavity_check)
from .domain import DomainSpec, Mesh, build_mesh, mesh_quality, read_mesh, write_mesh
from .fem import (DiscreteOperators, SpectralData, assemble, hopf_margin, principal_eigenpair,
                  rayleigh_gap_check, solve_dirichlet)
from .nonlinearity import Nonlinearity
from .resolvent import amp_limit_check, amp_sweep, resolvent
from .semilinear import (ProblemParams, SolveReport, build_constants_negative,
                         build_constants_positive, gradient_reconstruct, identity_residual,
                         limit_coefficient, solve_negative, solve_positive)

__version__ = "0.1.0"

__all__ = [
    "ConcavityReport", "DiscreteOperators", "DomainSpec", "Mesh", "Nonlinearity",
    "ProblemParams", "SolveReport", "SpectralData", "Transform", "amp_limit_check", "amp_sweep",
    "assemble", "backend", "build_constants_negative", "build_constants_positive", "build_mesh",
    "concavity_function_scan", "gradient_reconstruct", "hessian_field", "hopf_margin",
    "identity_residual", "limit_coefficient", "log_concavity_report", "mesh_quality",
    "power_concavity", "principal_eigenpair", "quasi_concavity_check", "rayleigh_gap_check",
    "read_mesh", "resolvent", "solve_dirichlet", "solve_negative", "solve_positive",
    "write_mesh",
]
