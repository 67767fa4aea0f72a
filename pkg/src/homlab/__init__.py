"""Finite element laboratory for semilinear problems with singular sources in perforated domains."""

from .corrector import analytic_mu, compute_w, compute_z, mu_density
from .domain import LatticeSpec, MeshParams, build_mesh, plain_mesh, place_holes, removed_measure
from .fem import CoefficientField, FeFunction, assemble_stiffness, solve_spd
from .harness import SweepConfig, emit, run_case, run_sweep, selftest
from .singular import SolverParams, make_source, regularize, solve_semilinear
from .truncate import g_cut, s_window, t_cut, z_delta

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "FeFunction", "LatticeSpec", "MeshParams", "SolverParams", "SweepConfig",
    "analytic_mu", "assemble_stiffness", "build_mesh", "compute_w", "compute_z", "emit", "g_cut",
    "make_source", "mu_density", "place_holes", "plain_mesh", "regularize", "removed_measure",
    "run_case", "run_sweep", "s_window", "selftest", "solve_semilinear", "solve_spd", "t_cut", "z_delta",
]
