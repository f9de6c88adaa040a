"""Gauss-Newton accelerated MPPI and baselines for black-box optimal control."""

from gnmppi.exceptions import (
    ConfigError,
    DegenerateWeights,
    DimensionMismatch,
    GnMppiError,
    NonFiniteResidual,
    OddBatchWithAntithetic,
    SingularHessian,
)
from gnmppi.ggn import GgnSubproblem, StepLengthGrid, build_subproblem, full_ggn_step, grid_line_search
from gnmppi.jacobian import JacobianEstimate, fd_jacobian, smoothed_jacobian, smoothed_residual
from gnmppi.mppi import MppiConfig, mppi_solve, mppi_step
from gnmppi.problem import (
    BatchEvaluator,
    BlackBoxResidual,
    ControlProblem,
    InputTrajectory,
    KnownOptimum,
    ScaledSquaredNorm,
    StateTrajectory,
    evaluate_cost,
    evaluate_cost_batch,
    evaluate_residual_batch,
)
from gnmppi.problems import PROBLEM_IDS, DoubleIntegratorSpec, FurutaSpec, make_problem
from gnmppi.sampling import DiagonalCovariance, SampleBatch, draw, mc_error_bound, verify_mc_bound
from gnmppi.solvers import (
    SOLVERS,
    FdConfig,
    GnMppiConfig,
    solve_ggn_fd,
    solve_gn_mppi,
    solve_gradient_descent_fd,
    solve_mppi,
)
from gnmppi.trace import IterationRecord, SolverTrace

__version__ = "0.1.0"

__all__ = [
    "BatchEvaluator",
    "BlackBoxResidual",
    "ConfigError",
    "ControlProblem",
    "DegenerateWeights",
    "DiagonalCovariance",
    "DimensionMismatch",
    "DoubleIntegratorSpec",
    "FdConfig",
    "FurutaSpec",
    "GgnSubproblem",
    "GnMppiConfig",
    "GnMppiError",
    "InputTrajectory",
    "IterationRecord",
    "JacobianEstimate",
    "KnownOptimum",
    "MppiConfig",
    "NonFiniteResidual",
    "OddBatchWithAntithetic",
    "PROBLEM_IDS",
    "SOLVERS",
    "SampleBatch",
    "ScaledSquaredNorm",
    "SingularHessian",
    "SolverTrace",
    "StateTrajectory",
    "StepLengthGrid",
    "build_subproblem",
    "draw",
    "evaluate_cost",
    "evaluate_cost_batch",
    "evaluate_residual_batch",
    "fd_jacobian",
    "full_ggn_step",
    "grid_line_search",
    "make_problem",
    "mc_error_bound",
    "mppi_solve",
    "mppi_step",
    "smoothed_jacobian",
    "smoothed_residual",
    "solve_ggn_fd",
    "solve_gn_mppi",
    "solve_gradient_descent_fd",
    "solve_mppi",
    "verify_mc_bound",
]
