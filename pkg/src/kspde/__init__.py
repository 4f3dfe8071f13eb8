"""Vanishing-viscosity laboratory for degenerate parabolic SPDEs on the torus."""

__version__ = "0.1.0"

from .torus import MollifierKernel, ScalarField, TorusGrid, lp_norm, mollified_seminorm, w_seminorm  # noqa: E402
from .coeffs import Coefficients, make_diffusion, make_flux, regularize  # noqa: E402
from .noise import NoiseModel, WienerPath, make_noise, sample_path, truncate_coefficients  # noqa: E402
from .solver import SolverConfig, Trajectory, comparison_run, run, step, viscosity_sweep  # noqa: E402
from .kinetic import XiGrid, accumulate_measures, kinetic_function, kinetic_residual, tail_mass  # noqa: E402
from .verify import EnsembleSpec, RunReport, Setup  # noqa: E402

__all__ = [
    "Coefficients",
    "EnsembleSpec",
    "MollifierKernel",
    "NoiseModel",
    "RunReport",
    "ScalarField",
    "Setup",
    "SolverConfig",
    "TorusGrid",
    "Trajectory",
    "WienerPath",
    "XiGrid",
    "accumulate_measures",
    "comparison_run",
    "kinetic_function",
    "kinetic_residual",
    "lp_norm",
    "make_diffusion",
    "make_flux",
    "make_noise",
    "mollified_seminorm",
    "regularize",
    "run",
    "sample_path",
    "step",
    "tail_mass",
    "truncate_coefficients",
    "viscosity_sweep",
    "w_seminorm",
]
