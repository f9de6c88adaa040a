"""Jacobian reconstruction for black-box residuals.

Two estimators, each issuing exactly one evaluation batch:

* Gaussian smoothing: ``J = E[R(U + W) W^T] Sigma^{-1}``, the Jacobian of the
  smoothed residual ``E[R(U + W)]``.  Works for nonsmooth ``R``.
* Forward finite differences with step ``eps`` (smooth ``R`` only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gnmppi.problem import BatchEvaluator, BlackBoxResidual, ControlProblem, as_evaluator
from gnmppi.sampling import DiagonalCovariance, SampleBatch, SeedLike, draw

Array = NDArray[np.float64]

#: sqrt of double-precision machine epsilon, ~1.49e-8
FD_EPS = float(np.sqrt(np.finfo(float).eps))


@dataclass(frozen=True)
class JacobianEstimate:
    matrix: Array
    method: str  # "gaussian_smoothing" or "finite_difference"
    samples_used: int
    cov_or_eps: DiagonalCovariance | float


def jacobian_from_samples(
    values: Array, perturbations: Array, cov: DiagonalCovariance, antithetic: bool = False
) -> Array:
    """Monte Carlo average ``(1/M) sum_m values_m W_m^T Sigma^{-1}``.

    ``values`` has shape ``(M, n_R)`` (or ``(M,)`` for a scalar function, in
    which case the result is the smoothed gradient of shape ``(dim,)``).
    With ``antithetic=True`` the rows are taken as mirrored pairs
    ``W_{m + M/2} = -W_m`` and the sum is folded into
    ``sum_m (values_m - values_{m + M/2}) W_m^T``: the same number, but any
    part of ``R`` that is even in ``W`` (a constant, for instance) cancels
    exactly instead of up to rounding.
    """
    values = np.asarray(values, dtype=float)
    W = np.asarray(perturbations, dtype=float)
    M = W.shape[0]
    if antithetic:
        if M % 2:
            raise ValueError("antithetic folding needs an even number of samples")
        h = M // 2
        values = values[:h] - values[h:]
        W = W[:h]
    if values.ndim == 1:
        return (values @ W) / M * cov.inverse_diag
    return (values.T @ W) / M * cov.inverse_diag[None, :]


def smoothed_jacobian(
    residual: BatchEvaluator | ControlProblem | BlackBoxResidual,
    U: ArrayLike,
    cov: DiagonalCovariance,
    M: int,
    seed: SeedLike,
    antithetic: bool = True,
    samples: SampleBatch | None = None,
) -> JacobianEstimate:
    """Gaussian-smoothing Jacobian from one batch of ``M`` residual evaluations."""
    if M < 2:
        raise ValueError("smoothing needs M >= 2")
    evaluator = as_evaluator(residual)
    U = np.asarray(U, dtype=float).reshape(-1)
    batch = samples if samples is not None else draw(cov, M, seed, antithetic)
    values = evaluator.residuals(U + batch.perturbations)
    matrix = jacobian_from_samples(values, batch.perturbations, cov, batch.antithetic)
    return JacobianEstimate(matrix, "gaussian_smoothing", batch.size, cov)


def smoothed_residual(
    residual: BatchEvaluator | ControlProblem | BlackBoxResidual,
    U: ArrayLike,
    cov: DiagonalCovariance,
    M: int,
    seed: SeedLike,
    antithetic: bool = True,
) -> Array:
    """Empirical mean of ``R(U + W_m)``, an estimate of the smoothed residual."""
    evaluator = as_evaluator(residual)
    U = np.asarray(U, dtype=float).reshape(-1)
    batch = draw(cov, M, seed, antithetic)
    return evaluator.residuals(U + batch.perturbations).mean(axis=0)


def fd_jacobian(
    residual: BatchEvaluator | ControlProblem | BlackBoxResidual,
    U: ArrayLike,
    eps: float = FD_EPS,
    base: Array | None = None,
) -> JacobianEstimate:
    """Forward-difference Jacobian, one batch of ``dim + 1`` evaluations.

    Column ``j`` is ``(R(U + eps e_j) - R(U)) / eps``.  If ``base`` is given it
    is used as ``R(U)`` and the batch shrinks to ``dim`` evaluations.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    evaluator = as_evaluator(residual)
    U = np.asarray(U, dtype=float).reshape(-1)
    shifted = U[None, :] + eps * np.eye(U.size)
    if base is None:
        values = evaluator.residuals(np.vstack([U, shifted]))
        used = values.shape[0]
        base, values = values[0], values[1:]
    else:
        values = evaluator.residuals(shifted)
        used = values.shape[0]
    matrix = (values - base[None, :]).T / eps
    return JacobianEstimate(matrix, "finite_difference", used, eps)
