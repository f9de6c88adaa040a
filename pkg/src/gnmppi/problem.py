"""Problem interface: trajectories, black-box residuals, convex outer functions.

Every solver in this package sees a problem only through batch evaluation of
the inner residual ``R(U)`` and through the exact derivatives of the convex
outer function ``Phi``.  The overall cost is ``C(U) = Phi(R(U))``.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gnmppi.exceptions import DimensionMismatch, NonFiniteResidual

Array = NDArray[np.float64]


@dataclass(frozen=True)
class InputTrajectory:
    """Flat input trajectory ``U = [u_0, ..., u_{N-1}]`` of length ``N * n_u``."""

    values: Array
    horizon: int
    input_dim: int = 1

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.horizon < 1 or self.input_dim < 1:
            raise ValueError("horizon and input_dim must be positive")
        if values.size != self.horizon * self.input_dim:
            raise DimensionMismatch(
                f"expected {self.horizon * self.input_dim} values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("input trajectory contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def stages(self) -> Array:
        """Inputs reshaped to ``(N, n_u)``."""
        return self.values.reshape(self.horizon, self.input_dim)


@dataclass(frozen=True)
class StateTrajectory:
    """Flat state trajectory ``X = [x_0, ..., x_N]`` of length ``(N + 1) * n_x``."""

    values: Array
    state_dim: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size % self.state_dim or values.size < self.state_dim:
            raise DimensionMismatch(
                f"{values.size} values do not form a state trajectory with n_x={self.state_dim}"
            )
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.size // self.state_dim - 1

    @property
    def states(self) -> Array:
        return self.values.reshape(-1, self.state_dim)


class BlackBoxResidual:
    """Opaque, deterministic, batch-evaluable inner function ``U -> R(U)``.

    ``fn`` maps a ``(B, dim)`` array to a ``(B, residual_dim)`` array and must
    treat rows independently, so that evaluating a row alone or inside any
    batch gives bit-identical output.  The initial state and all simulator
    parameters live inside ``fn``; nothing about derivatives is exposed.
    ``fn`` must be re-entrant: batch evaluators call it from several threads.
    """

    def __init__(
        self,
        fn: Callable[[Array], Array],
        dim: int,
        residual_dim: int,
        name: str = "residual",
    ) -> None:
        self._fn = fn
        self.dim = int(dim)
        self.residual_dim = int(residual_dim)
        self.name = name

    def eval_rows(self, batch: Array) -> Array:
        out = np.asarray(self._fn(batch), dtype=float)
        if out.shape != (batch.shape[0], self.residual_dim):
            raise DimensionMismatch(
                f"{self.name}: expected output shape {(batch.shape[0], self.residual_dim)}, "
                f"got {out.shape}"
            )
        return out

    def __call__(self, U: ArrayLike) -> Array:
        row = _as_batch(U, self.dim)
        return self.eval_rows(row)[0]

    def __repr__(self) -> str:
        return f"BlackBoxResidual({self.name!r}, dim={self.dim}, residual_dim={self.residual_dim})"


class ScaledSquaredNorm:
    """Convex outer function ``Phi(R) = scale * ||R||^2``.

    ``scale=0.5`` is the usual least-squares form.  ``value`` accepts a single
    residual vector or a ``(B, n_R)`` batch.
    """

    def __init__(self, scale: float = 0.5) -> None:
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    def value(self, R: ArrayLike) -> float | Array:
        R = np.asarray(R, dtype=float)
        return self.scale * np.sum(R * R, axis=-1)

    def gradient(self, R: ArrayLike) -> Array:
        return 2.0 * self.scale * np.asarray(R, dtype=float)

    def hessian(self, R: ArrayLike) -> Array:
        n = np.asarray(R).shape[-1]
        return 2.0 * self.scale * np.eye(n)

    def __repr__(self) -> str:
        return f"ScaledSquaredNorm(scale={self.scale})"


@dataclass(frozen=True)
class KnownOptimum:
    cost: float
    tol: float = 1e-3


@dataclass(frozen=True)
class ControlProblem:
    """A black-box residual paired with a convex outer function.

    ``known_optimum`` is read only by the benchmark classifier, never by the
    solvers.  ``u0`` is the default initial guess.
    """

    name: str
    residual: BlackBoxResidual
    outer: ScaledSquaredNorm
    u0: Array
    known_optimum: KnownOptimum | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        u0 = np.asarray(self.u0, dtype=float).reshape(-1)
        if u0.size != self.residual.dim:
            raise DimensionMismatch(f"u0 has {u0.size} entries, problem dim is {self.residual.dim}")
        object.__setattr__(self, "u0", u0)

    @property
    def dim(self) -> int:
        return self.residual.dim

    @property
    def residual_dim(self) -> int:
        return self.residual.residual_dim


def _as_batch(batch: ArrayLike | Sequence, dim: int) -> Array:
    if isinstance(batch, InputTrajectory):
        batch = batch.values
    elif isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], InputTrajectory):
        batch = [b.values for b in batch]
    arr = np.asarray(batch, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatch(f"expected rows of length {dim}, got array of shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("batch must contain at least one trajectory")
    return arr


def _check_finite(values: Array, name: str) -> None:
    bad = ~np.all(np.isfinite(values.reshape(values.shape[0], -1)), axis=1)
    if bad.any():
        index = int(np.flatnonzero(bad)[0])
        raise NonFiniteResidual(f"{name}: non-finite residual at batch index {index}", index=index)


class BatchEvaluator:
    """Counting, optionally parallel evaluator for one problem.

    Each call to :meth:`residuals` or :meth:`costs` counts as one batch,
    which is the unit of the parallel cost model: a batch of ``M`` rollouts
    costs about one rollout on ideal parallel hardware.  Rows are split into
    ``workers`` contiguous chunks; output order always matches input order.
    """

    def __init__(
        self,
        residual: BlackBoxResidual,
        outer: ScaledSquaredNorm | None = None,
        workers: int = 1,
    ) -> None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.residual = residual
        self.outer = outer
        self.workers = int(workers)
        self.batches = 0
        self.evaluations = 0
        self.batch_sizes: list[int] = []
        self._lock = threading.Lock()

    @classmethod
    def for_problem(cls, problem: ControlProblem, workers: int = 1) -> BatchEvaluator:
        return cls(problem.residual, problem.outer, workers=workers)

    @property
    def dim(self) -> int:
        return self.residual.dim

    def reset_counters(self) -> None:
        with self._lock:
            self.batches = 0
            self.evaluations = 0
            self.batch_sizes = []

    def residuals(self, batch: ArrayLike | Sequence, check_finite: bool = True) -> Array:
        arr = _as_batch(batch, self.residual.dim)
        with self._lock:
            self.batches += 1
            self.evaluations += arr.shape[0]
            self.batch_sizes.append(arr.shape[0])
        if self.workers == 1 or arr.shape[0] < 2 * self.workers:
            out = self.residual.eval_rows(arr)
        else:
            chunks = np.array_split(arr, self.workers)
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                out = np.concatenate(list(pool.map(self.residual.eval_rows, chunks)))
        if check_finite:
            _check_finite(out, self.residual.name)
        return out

    def costs(self, batch: ArrayLike | Sequence) -> Array:
        if self.outer is None:
            raise ValueError("cost evaluation needs an outer function")
        return np.asarray(self.outer.value(self.residuals(batch)), dtype=float)


def as_evaluator(obj: BatchEvaluator | ControlProblem | BlackBoxResidual) -> BatchEvaluator:
    if isinstance(obj, BatchEvaluator):
        return obj
    if isinstance(obj, ControlProblem):
        return BatchEvaluator.for_problem(obj)
    if isinstance(obj, BlackBoxResidual):
        return BatchEvaluator(obj)
    raise TypeError(f"cannot evaluate {type(obj).__name__}")


def evaluate_residual_batch(
    problem: ControlProblem, batch: ArrayLike | Sequence, workers: int = 1
) -> Array:
    """Residuals ``R(U)`` for every trajectory in ``batch``, shape ``(B, n_R)``."""
    return BatchEvaluator.for_problem(problem, workers).residuals(batch)


def evaluate_cost_batch(
    problem: ControlProblem, batch: ArrayLike | Sequence, workers: int = 1
) -> Array:
    """Costs ``Phi(R(U))`` for every trajectory in ``batch``, shape ``(B,)``."""
    return BatchEvaluator.for_problem(problem, workers).costs(batch)


def evaluate_cost(problem: ControlProblem, U: ArrayLike) -> float:
    return float(evaluate_cost_batch(problem, U)[0])
