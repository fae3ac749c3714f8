"""Compressed sensing under Poisson and Poisson-Gaussian noise with
variance-stabilising transforms."""

from .bounds import BoundReport, bound_report
from .errors import (
    BoundInapplicableError, DimensionError, DomainError, ParameterError,
    PreconditionError, VstcsError,
)
from .noise import MeasurementSet, NoiseModel, sample_measurements, saturation_reject
from .sensing import SensingMatrix, estimate_ric, flux_check, generate_sensing_matrix
from .signals import OrthoBasis, SparseSignal, generate_sparse_signal, make_dct2_basis, make_dct_basis
from .solvers import (
    SolverProblem, SolverResult, make_problem, omniscient_rho, solve, solve_constrained,
    solve_penalized, solve_poisson_nll,
)
from .vst import VstSpec, apply_vst, residual_magnitude, residual_statistics

__version__ = "0.1.0"
