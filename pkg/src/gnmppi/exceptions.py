"""Exception types raised by the solvers and the benchmark harness."""

from __future__ import annotations


class GnMppiError(Exception):
    """Base class for all package errors."""


class NonFiniteResidual(GnMppiError):
    """The black box produced NaN or Inf.

    ``index`` is the position of the first offending sample in the batch
    (``None`` for single evaluations).
    """

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class DimensionMismatch(GnMppiError, ValueError):
    pass


class OddBatchWithAntithetic(GnMppiError, ValueError):
    pass


class DegenerateWeights(GnMppiError):
    """MPPI weights could not be normalized (NaN costs or empty support)."""


class SingularHessian(GnMppiError):
    pass


class ConfigError(GnMppiError, ValueError):
    pass
