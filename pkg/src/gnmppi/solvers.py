"""The four solvers behind one interface.

* ``A`` -- GGN with forward-difference Jacobian (:func:`solve_ggn_fd`)
* ``B`` -- gradient descent with forward-difference gradient
  (:func:`solve_gradient_descent_fd`)
* ``C`` -- deterministic MPPI (:func:`solve_mppi`)
* ``D`` -- Gauss-Newton accelerated MPPI (:func:`solve_gn_mppi`)

A, B and D share the same skeleton: one batch to get a search direction,
one batch for the step-length grid, then accept the best grid point if it
lowers the cost.  Every solver stops once both the taken step and the
(smoothed) gradient fall under their tolerances.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gnmppi.ggn import StepLengthGrid, build_subproblem, full_ggn_step, grid_line_search
from gnmppi.jacobian import FD_EPS, jacobian_from_samples
from gnmppi.mppi import MppiConfig, mppi_solve
from gnmppi.problem import BatchEvaluator, ControlProblem, as_evaluator
from gnmppi.sampling import DiagonalCovariance, draw
from gnmppi.trace import CONVERGED, ERROR, ITERATION_CAP, IterationRecord, SolverTrace

Array = NDArray[np.float64]


@dataclass(frozen=True)
class FdConfig:
    """Settings for the finite-difference methods A and B."""

    max_iters: int = 1000
    eps: float = FD_EPS
    grid: StepLengthGrid = field(default_factory=StepLengthGrid)
    mu: float = 0.0
    stop_step_tol: float = 1e-6
    stop_grad_tol: float = 1e-4


@dataclass(frozen=True)
class GnMppiConfig:
    """Settings for Gauss-Newton accelerated MPPI.

    ``cov0`` is the initial smoothing covariance, shrunk by ``beta`` after
    every iteration.  ``residual_source`` picks what stands in for ``R(U_k)``
    in the gradient: ``"center"`` evaluates ``U_k`` exactly as one extra row
    of the smoothing batch, ``"smoothed"`` uses the sample mean of the
    smoothing batch.
    """

    cov0: DiagonalCovariance
    M: int = 2000
    max_iters: int = 1000
    beta: float = 0.8
    grid: StepLengthGrid = field(default_factory=StepLengthGrid)
    mu: float = 0.0
    antithetic: bool = True
    seed: int = 0
    residual_source: str = "center"
    stop_step_tol: float = 1e-6
    stop_grad_tol: float = 1e-4

    def __post_init__(self) -> None:
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.M < 2 or (self.antithetic and self.M % 2):
            raise ValueError("M must be >= 2 (and even with antithetic sampling)")
        if self.residual_source not in ("center", "smoothed"):
            raise ValueError("residual_source must be 'center' or 'smoothed'")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass
class _Direction:
    direction: Array
    grad: Array
    cost: float | None  # C(U_k) when the direction batch provides it
    deterministic: bool


def _descent_loop(
    evaluator: BatchEvaluator,
    U0: ArrayLike,
    method: str,
    max_iters: int,
    grid: StepLengthGrid,
    step_tol: float,
    grad_tol: float,
    direction_fn: Callable[[Array, int], _Direction],
) -> tuple[Array, SolverTrace]:
    start_batches, start_evals = evaluator.batches, evaluator.evaluations
    U = np.asarray(U0, dtype=float).reshape(-1).copy()
    trace = SolverTrace(method)
    t0 = time.perf_counter()
    try:
        for k in range(max_iters):
            d = direction_fn(U, k)
            grad_norm = float(np.linalg.norm(d.grad))
            cost = d.cost
            # the grid batch is issued even for a zero direction (fixed budget)
            extra = U[None, :] if cost is None else None
            alpha, trial_cost, extra_costs = grid_line_search(
                evaluator, U, d.direction, grid, extra_points=extra
            )
            if cost is None:
                cost = float(extra_costs[0])
            accepted = trial_cost < cost
            step = alpha * d.direction if accepted else np.zeros_like(U)
            step_norm = float(np.linalg.norm(step))
            trace.records.append(
                IterationRecord(
                    k=k,
                    U=U.copy(),
                    cost=float(cost) if cost is not None else float("nan"),
                    step_norm=step_norm,
                    grad_norm=grad_norm,
                    batches=evaluator.batches - start_batches,
                    evaluations=evaluator.evaluations - start_evals,
                    wall_time=time.perf_counter() - t0,
                    alpha=alpha,
                    accepted=accepted,
                )
            )
            U = U + step
            if step_norm < step_tol and grad_norm < grad_tol:
                trace.status = CONVERGED
                break
            if not accepted and d.deterministic:
                # a deterministic method would repeat the same rejected step forever
                trace.status = ITERATION_CAP
                trace.message = "no grid step length improves the cost"
                break
        else:
            trace.status = ITERATION_CAP
    except Exception as exc:
        trace.status = ERROR
        trace.message = f"{type(exc).__name__}: {exc}"
        exc.trace = trace
        raise
    finally:
        trace.U_final = U
        trace.batches = evaluator.batches - start_batches
        trace.evaluations = evaluator.evaluations - start_evals
    return U, trace


def solve_ggn_fd(
    problem: BatchEvaluator | ControlProblem,
    cfg: FdConfig | None = None,
    U0: ArrayLike | None = None,
) -> tuple[Array, SolverTrace]:
    """Method A: GGN with a forward-difference Jacobian of the residual."""
    cfg = cfg or FdConfig()
    evaluator = as_evaluator(problem)
    U0 = _initial_guess(problem, U0)
    eye = np.eye(evaluator.dim)

    def direction(U: Array, k: int) -> _Direction:
        values = evaluator.residuals(np.vstack([U, U + cfg.eps * eye]))
        R = values[0]
        J = (values[1:] - R).T / cfg.eps
        sub = build_subproblem(evaluator.outer, R, J, cfg.mu)
        return _Direction(full_ggn_step(sub), sub.gradient, float(evaluator.outer.value(R)), True)

    return _descent_loop(
        evaluator, U0, "A", cfg.max_iters, cfg.grid, cfg.stop_step_tol, cfg.stop_grad_tol, direction
    )


def solve_gradient_descent_fd(
    problem: BatchEvaluator | ControlProblem,
    cfg: FdConfig | None = None,
    U0: ArrayLike | None = None,
) -> tuple[Array, SolverTrace]:
    """Method B: steepest descent on a forward-difference gradient of the cost."""
    cfg = cfg or FdConfig()
    evaluator = as_evaluator(problem)
    U0 = _initial_guess(problem, U0)
    eye = np.eye(evaluator.dim)

    def direction(U: Array, k: int) -> _Direction:
        costs = evaluator.costs(np.vstack([U, U + cfg.eps * eye]))
        grad = (costs[1:] - costs[0]) / cfg.eps
        return _Direction(-grad, grad, float(costs[0]), True)

    return _descent_loop(
        evaluator, U0, "B", cfg.max_iters, cfg.grid, cfg.stop_step_tol, cfg.stop_grad_tol, direction
    )


def solve_gn_mppi(
    problem: BatchEvaluator | ControlProblem,
    cfg: GnMppiConfig,
    U0: ArrayLike | None = None,
) -> tuple[Array, SolverTrace]:
    """Method D: Gauss-Newton accelerated MPPI.

    Per iteration: a smoothing batch gives the Jacobian (and ``R(U_k)``),
    the GGN system gives the direction, the step-length grid is one more
    batch, and the covariance shrinks by ``beta``.
    """
    evaluator = as_evaluator(problem)
    U0 = _initial_guess(problem, U0)
    outer = evaluator.outer
    cov = [cfg.cov0]

    def direction(U: Array, k: int) -> _Direction:
        cov_k = cov[0]
        samples = draw(cov_k, cfg.M, (cfg.seed, k), cfg.antithetic)
        points = U + samples.perturbations
        if cfg.residual_source == "center":
            values = evaluator.residuals(np.vstack([points, U]))
            R, values = values[-1], values[:-1]
            cost = float(outer.value(R))
        else:
            values = evaluator.residuals(points)
            R = values.mean(axis=0)
            cost = None
        J = jacobian_from_samples(values, samples.perturbations, cov_k, samples.antithetic)
        sub = build_subproblem(outer, R, J, cfg.mu)
        cov[0] = cov_k.scaled(cfg.beta)
        return _Direction(full_ggn_step(sub), sub.gradient, cost, False)

    return _descent_loop(
        evaluator, U0, "D", cfg.max_iters, cfg.grid, cfg.stop_step_tol, cfg.stop_grad_tol, direction
    )


def solve_mppi(
    problem: BatchEvaluator | ControlProblem,
    cfg: MppiConfig,
    U0: ArrayLike | None = None,
) -> tuple[Array, SolverTrace]:
    """Method C: deterministic MPPI."""
    return mppi_solve(problem, _initial_guess(problem, U0), cfg)


def _initial_guess(problem, U0: ArrayLike | None) -> Array:
    if U0 is not None:
        return np.asarray(U0, dtype=float).reshape(-1)
    if isinstance(problem, ControlProblem):
        return problem.u0.copy()
    raise ValueError("U0 is required when solving from a bare evaluator")


SOLVERS = {
    "A": solve_ggn_fd,
    "B": solve_gradient_descent_fd,
    "C": solve_mppi,
    "D": solve_gn_mppi,
}
