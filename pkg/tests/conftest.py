from __future__ import annotations

import threading
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gnmppi.problem import BlackBoxResidual, ControlProblem, ScaledSquaredNorm

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


class CountingResidual:
    """Wraps a row-wise residual function and counts calls and rows.

    Independent of the package's own counters, so tests can cross-check them.
    """

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self.rows = 0
        self.call_sizes: list[int] = []
        self._lock = threading.Lock()

    def __call__(self, batch):
        with self._lock:
            self.calls += 1
            self.rows += batch.shape[0]
            self.call_sizes.append(batch.shape[0])
        return self.fn(batch)


def instrumented(problem: ControlProblem) -> tuple[ControlProblem, CountingResidual]:
    """Copy of ``problem`` whose residual calls go through a counter."""
    counter = CountingResidual(problem.residual.eval_rows)
    residual = BlackBoxResidual(counter, problem.dim, problem.residual_dim, problem.residual.name)
    clone = ControlProblem(problem.name, residual, problem.outer, problem.u0,
                           problem.known_optimum, problem.metadata)
    return clone, counter


def linear_problem(A, b, u0=None, name="linear") -> ControlProblem:
    """``R(U) = A U + b`` with ``Phi = 1/2 ||R||^2``, evaluated row-wise."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def fn(U):
        # row-wise elementwise products keep rows bit-identical across batches
        return (U[:, None, :] * A[None, :, :]).sum(axis=2) + b

    u0 = np.zeros(A.shape[1]) if u0 is None else u0
    return ControlProblem(name, BlackBoxResidual(fn, A.shape[1], A.shape[0], name),
                          ScaledSquaredNorm(0.5), u0)


def scalar_problem(cost_fn, dim=1, name="scalar") -> ControlProblem:
    """Problem with ``C(U) = cost_fn(U) >= 0`` encoded as ``R = sqrt(2 C)``."""

    def fn(U):
        return np.sqrt(2.0 * cost_fn(U))[:, None]

    return ControlProblem(name, BlackBoxResidual(fn, dim, 1, name), ScaledSquaredNorm(0.5),
                          np.zeros(dim))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _timed_default_suite(out):
    from gnmppi.bench import default_suite_path, run_suite

    t0 = time.perf_counter()
    outcomes = run_suite(default_suite_path(), out)
    return outcomes, out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_suite_run(tmp_path_factory):
    """The packaged default suite, run once per session: (outcomes, out_dir, seconds)."""
    return _timed_default_suite(tmp_path_factory.mktemp("suite_a"))


@pytest.fixture(scope="session")
def default_suite_rerun(tmp_path_factory):
    """An independent second run of the default suite, for determinism checks."""
    return _timed_default_suite(tmp_path_factory.mktemp("suite_b"))
