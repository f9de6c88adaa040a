"""Deterministic MPPI: ``U_{k+1} = U_k + sum_m w_m W_m / sum_m w_m`` with
``w_m = exp(-C(U_k + W_m) / lambda)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gnmppi.exceptions import DegenerateWeights
from gnmppi.jacobian import jacobian_from_samples
from gnmppi.problem import BatchEvaluator, ControlProblem, as_evaluator
from gnmppi.sampling import DiagonalCovariance, SampleBatch, draw
from gnmppi.trace import CONVERGED, ERROR, ITERATION_CAP, IterationRecord, SolverTrace

Array = NDArray[np.float64]


@dataclass(frozen=True)
class MppiConfig:
    """Settings for the MPPI solver.

    Temperature and covariance stay fixed over the iterations.
    """

    cov: DiagonalCovariance
    lam: float = 1.0
    M: int = 2000
    max_iters: int = 1000
    antithetic: bool = True
    seed: int = 0
    stop_step_tol: float = 1e-6
    stop_grad_tol: float = 1e-4
    grad_statistic: str = "softmin"

    def __post_init__(self) -> None:
        if self.grad_statistic not in ("softmin", "gaussian"):
            raise ValueError("grad_statistic must be 'softmin' or 'gaussian'")
        if not self.lam > 0:
            raise ValueError("temperature lam must be positive")
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.antithetic and self.M % 2:
            raise ValueError("antithetic sampling needs an even M")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class MppiStep:
    """Result of one MPPI update.

    ``smoothed_grad`` is the Gaussian-smoothing gradient estimate of ``C``;
    ``softmin_grad = -lam * Sigma^{-1} delta`` is the gradient of the
    softmin-smoothed objective ``-lam log E[exp(-C(U + W) / lam)]``, which
    the MPPI step descends.  Both come from the same samples.
    """

    delta: Array
    weights: Array  # normalized, sums to 1
    samples: SampleBatch
    costs: Array
    center_cost: float | None
    smoothed_grad: Array
    softmin_grad: Array

    @property
    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-np.sum(w * np.log(w)))


def normalized_weights(costs: ArrayLike, lam: float) -> Array:
    """Softmax of ``-costs / lam``, shifted by the minimum cost.

    The shift leaves the normalized weights unchanged and keeps the best
    sample at weight ``exp(0) = 1`` before normalization.
    """
    costs = np.asarray(costs, dtype=float)
    if np.isnan(costs).any() or not np.isfinite(costs.min()):
        raise DegenerateWeights("costs contain NaN or no finite value")
    w = np.exp(-(costs - costs.min()) / lam)
    total = w.sum()
    if not total > 0 or not np.isfinite(total):
        raise DegenerateWeights(f"weight sum is {total}")
    return w / total


def mppi_step(
    problem: BatchEvaluator | ControlProblem,
    U: ArrayLike,
    cfg: MppiConfig,
    iter_seed,
    include_center: bool = False,
) -> MppiStep:
    """One MPPI update from ``U`` using a single cost batch.

    With ``include_center`` the batch also carries ``U`` itself, so ``C(U)``
    comes for free; it does not enter the weights.
    """
    evaluator = as_evaluator(problem)
    U = np.asarray(U, dtype=float).reshape(-1)
    samples = draw(cfg.cov, cfg.M, iter_seed, cfg.antithetic)
    points = U + samples.perturbations
    if include_center:
        points = np.vstack([points, U])
    all_costs = evaluator.costs(points)
    costs = all_costs[: cfg.M]
    center = float(all_costs[-1]) if include_center else None
    weights = normalized_weights(costs, cfg.lam)
    if samples.antithetic:
        # fold mirrored pairs so that equal weights cancel exactly
        h = cfg.M // 2
        delta = (weights[:h] - weights[h:]) @ samples.perturbations[:h]
    else:
        delta = weights @ samples.perturbations
    grad = jacobian_from_samples(costs, samples.perturbations, cfg.cov, samples.antithetic)
    softmin_grad = -cfg.lam * cfg.cov.inverse_diag * delta
    return MppiStep(delta, weights, samples, costs, center, grad, softmin_grad)


def mppi_solve(
    problem: BatchEvaluator | ControlProblem,
    U0: ArrayLike,
    cfg: MppiConfig,
) -> tuple[Array, SolverTrace]:
    """Iterate MPPI steps until step and smoothed gradient are both small.

    Each iteration draws fresh samples keyed by ``(seed, k)`` and issues
    exactly one evaluation batch, which also carries ``U_k`` so the trace
    has ``C(U_k)``.  ``cfg.grad_statistic`` selects the gradient tested
    against ``stop_grad_tol`` (see :class:`MppiStep`).
    """
    evaluator = as_evaluator(problem)
    start_batches, start_evals = evaluator.batches, evaluator.evaluations
    U = np.asarray(U0, dtype=float).reshape(-1).copy()
    trace = SolverTrace("C")
    t0 = time.perf_counter()
    try:
        for k in range(cfg.max_iters):
            step = mppi_step(evaluator, U, cfg, (cfg.seed, k), include_center=True)
            step_norm = float(np.linalg.norm(step.delta))
            grad = step.softmin_grad if cfg.grad_statistic == "softmin" else step.smoothed_grad
            grad_norm = float(np.linalg.norm(grad))
            trace.records.append(
                IterationRecord(
                    k=k,
                    U=U.copy(),
                    cost=step.center_cost,
                    step_norm=step_norm,
                    grad_norm=grad_norm,
                    batches=evaluator.batches - start_batches,
                    evaluations=evaluator.evaluations - start_evals,
                    wall_time=time.perf_counter() - t0,
                    weight_entropy=step.entropy,
                )
            )
            U = U + step.delta
            if step_norm < cfg.stop_step_tol and grad_norm < cfg.stop_grad_tol:
                trace.status = CONVERGED
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
