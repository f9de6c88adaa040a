"""Generalized Gauss-Newton step and the batched step-length search."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from gnmppi.exceptions import DimensionMismatch, NonFiniteResidual, SingularHessian
from gnmppi.jacobian import JacobianEstimate
from gnmppi.problem import BatchEvaluator, ControlProblem, ScaledSquaredNorm, as_evaluator

Array = NDArray[np.float64]
log = logging.getLogger(__name__)

#: Relative regularization levels tried after a failed Cholesky at mu = 0.
MU_LADDER = (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


@dataclass(frozen=True)
class GgnSubproblem:
    """Quadratic model ``g^T d + 1/2 d^T (B + mu I) d``."""

    gradient: Array
    hessian: Array
    mu: float = 0.0

    @property
    def dim(self) -> int:
        return self.gradient.size


@dataclass(frozen=True)
class StepLengthGrid:
    """Candidate step lengths ``gamma**j`` for ``j = 0..count-1``.

    ``magnify`` prepends ``gamma**-magnify, ..., gamma**-1`` (steps longer
    than the full GGN step).
    """

    gamma: float = 0.7
    count: int = 2000
    magnify: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.count < 1 or self.magnify < 0:
            raise ValueError("count must be >= 1 and magnify >= 0")

    @property
    def lengths(self) -> Array:
        exponents = np.arange(-self.magnify, self.count, dtype=float)
        lengths = self.gamma**exponents
        # deep powers go subnormal (repeated values) and then 0; drop them
        return lengths[lengths >= np.finfo(float).tiny]


def build_subproblem(
    outer: ScaledSquaredNorm,
    Rval: ArrayLike,
    J: JacobianEstimate | ArrayLike,
    mu: float = 0.0,
) -> GgnSubproblem:
    """Gradient ``J^T grad Phi(R)`` and GGN Hessian ``J^T hess Phi(R) J``."""
    Rval = np.asarray(Rval, dtype=float).reshape(-1)
    Jm = np.asarray(J.matrix if isinstance(J, JacobianEstimate) else J, dtype=float)
    if Jm.ndim != 2 or Jm.shape[0] != Rval.size:
        raise DimensionMismatch(
            f"Jacobian of shape {Jm.shape} does not match residual of length {Rval.size}"
        )
    g = Jm.T @ outer.gradient(Rval)
    B = Jm.T @ outer.hessian(Rval) @ Jm
    B = 0.5 * (B + B.T)
    return GgnSubproblem(g, B, float(mu))


def _try_solve(B: Array, g: Array, mu: float) -> Array | None:
    try:
        factor = cho_factor(B + mu * np.eye(B.shape[0]), lower=True, check_finite=True)
    except LinAlgError:
        return None
    step = -cho_solve(factor, g)
    return step if np.all(np.isfinite(step)) else None


def full_ggn_step(sub: GgnSubproblem) -> Array:
    """Solve ``(B + mu I) d = -g`` by Cholesky.

    If the factorization fails, ``mu`` escalates through :data:`MU_LADDER`
    scaled by ``trace(B) / dim`` (or by 1 when ``B`` vanishes).
    """
    if not np.any(sub.gradient):
        return np.zeros(sub.dim)
    step = _try_solve(sub.hessian, sub.gradient, sub.mu)
    if step is not None:
        return step
    scale = float(np.trace(sub.hessian)) / sub.dim
    if not scale > 0.0:
        scale = 1.0
    for rel in MU_LADDER:
        mu = sub.mu + rel * scale
        step = _try_solve(sub.hessian, sub.gradient, mu)
        if step is not None:
            log.debug("GGN Hessian regularized with mu=%.3g", mu)
            return step
    raise SingularHessian("GGN Hessian is not positive definite even after regularization")


def grid_line_search(
    problem: BatchEvaluator | ControlProblem,
    U: ArrayLike,
    direction: ArrayLike,
    grid: StepLengthGrid,
    extra_points: ArrayLike | None = None,
) -> tuple[float, float, Array | None]:
    """Pick the grid step length with the lowest cost, in one cost batch.

    Ties go to the larger step (so a zero direction returns ``alpha = 1``
    and ``C(U)``; the batch is still spent, keeping the per-iteration budget
    fixed).  Grid points whose rollout is non-finite are
    discarded; the search fails only if every point does.  ``extra_points``
    are appended to the same batch and their costs returned as the third
    element (used to get ``C(U)`` without another batch).
    """
    evaluator = as_evaluator(problem)
    U = np.asarray(U, dtype=float).reshape(-1)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if not np.all(np.isfinite(direction)):
        raise ValueError("line search direction must be finite")
    alphas = grid.lengths
    points = U[None, :] + alphas[:, None] * direction[None, :]
    n_extra = 0
    if extra_points is not None:
        extra = np.atleast_2d(np.asarray(extra_points, dtype=float))
        n_extra = extra.shape[0]
        points = np.vstack([points, extra])
    residuals = evaluator.residuals(points, check_finite=False)
    costs = np.asarray(evaluator.outer.value(residuals), dtype=float)
    extra_costs = costs[len(alphas):] if n_extra else None
    grid_costs = costs[: len(alphas)]
    finite = np.isfinite(grid_costs)
    if not finite.any():
        raise NonFiniteResidual("every line-search candidate produced a non-finite rollout")
    for j in np.flatnonzero(~finite):
        log.debug("line search: discarding alpha=%.3g (non-finite rollout)", alphas[j])
    # alphas are sorted descending, so argmin's first hit is the largest tie
    best = int(np.argmin(np.where(finite, grid_costs, np.inf)))
    return float(alphas[best]), float(grid_costs[best]), extra_costs

