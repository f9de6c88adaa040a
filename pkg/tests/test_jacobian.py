from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import instrumented, linear_problem
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import normal_cdf, rosenbrock_jacobian, smoothed_step_derivative

from gnmppi.exceptions import NonFiniteResidual
from gnmppi.jacobian import FD_EPS, fd_jacobian, smoothed_jacobian, smoothed_residual
from gnmppi.problem import BatchEvaluator, BlackBoxResidual
from gnmppi.problems import make_problem
from gnmppi.sampling import DiagonalCovariance


def test_fd_eps_is_sqrt_machine_eps():
    assert FD_EPS == pytest.approx(1.49e-8, rel=1e-2)


def test_smoothed_jacobian_linear_map(rng):
    A = rng.uniform(-1, 1, size=(3, 4))
    p = linear_problem(A, rng.normal(size=3))
    J = smoothed_jacobian(p, rng.normal(size=4), DiagonalCovariance.isotropic(1.0, 4), 100_000, 0)
    assert J.method == "gaussian_smoothing" and J.samples_used == 100_000
    assert np.abs(J.matrix - A).max() < 0.05


def test_smoothed_jacobian_of_step_function():
    J = smoothed_jacobian(make_problem("III"), [0.0], DiagonalCovariance([1.0]), 1_000_000, 11)
    assert J.matrix[0, 0] == pytest.approx(smoothed_step_derivative(1.0), abs=0.005)


def test_constant_residual_gives_zero_jacobian():
    const = BlackBoxResidual(lambda U: np.full((U.shape[0], 2), 3.7), 3, 2)
    J = smoothed_jacobian(const, np.zeros(3), DiagonalCovariance.isotropic(0.5, 3), 64, 1)
    np.testing.assert_array_equal(J.matrix, np.zeros((2, 3)))


def test_smoothed_residual_examples(rng):
    step = make_problem("III")
    for sigma in (0.3, 1.0, 2.0):
        r = smoothed_residual(step, [0.0], DiagonalCovariance([sigma**2]), 20_000, 3)
        # each mirrored pair (w, -w) has exactly one member with w >= 0
        assert r[0] == 0.5
    r = smoothed_residual(step, [0.5], DiagonalCovariance([0.25]), 200_000, 4)
    assert r[0] == pytest.approx(normal_cdf(1.0), abs=0.005)
    A = rng.normal(size=(2, 3))
    b = rng.normal(size=2)
    U = rng.normal(size=3)
    lin = linear_problem(A, b)
    r = smoothed_residual(lin, U, DiagonalCovariance.isotropic(1.0, 3), 1000, 5)
    np.testing.assert_allclose(r, A @ U + b, atol=1e-12)


def test_smoothed_residual_converges_to_residual_on_smooth_map():
    I = make_problem("I")
    U = np.array([0.4, -0.3])
    for sigma in (0.1, 0.01):
        r = smoothed_residual(I, U, DiagonalCovariance.isotropic(sigma**2, 2), 10_000, 6)
        # smoothing bias of the quadratic residual is -sqrt(200) sigma^2
        assert np.abs(r - I.residual(U)).max() < 20 * sigma**2


def test_fd_examples(rng):
    A = rng.uniform(-1, 1, size=(4, 3))
    J = fd_jacobian(linear_problem(A, np.zeros(4)), rng.normal(size=3))
    assert J.method == "finite_difference" and J.samples_used == 4
    assert np.abs(J.matrix - A).max() < 1e-6
    J = fd_jacobian(make_problem("I"), [0.0, 0.0])
    np.testing.assert_allclose(J.matrix, rosenbrock_jacobian(0.0, 0.0), atol=1e-5)
    J = fd_jacobian(make_problem("III"), [0.5])
    assert J.matrix.tolist() == [[0.0]]


def test_fd_with_base_saves_one_row():
    p, counter = instrumented(make_problem("I"))
    U = np.array([0.2, 0.1])
    J = fd_jacobian(p, U, base=p.residual(U))
    assert J.samples_used == 2 and counter.call_sizes == [1, 2]


def test_fd_rejects_bad_eps():
    with pytest.raises(ValueError):
        fd_jacobian(make_problem("I"), [0.0, 0.0], eps=0.0)


@settings(max_examples=15)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_linear_exactness_property(m, n, seed):
    g = np.random.default_rng(seed)
    A = g.uniform(-1, 1, size=(m, n))
    p = linear_problem(A, g.normal(size=m))
    U = g.normal(size=n)
    assert np.abs(fd_jacobian(p, U).matrix - A).max() < 1e-6
    M = 20_000
    Js = smoothed_jacobian(p, U, DiagonalCovariance.isotropic(1.0, n), M, seed).matrix
    assert np.linalg.norm(Js - A) <= 5 / math.sqrt(M) * max(1.0, math.sqrt(m * n))


def test_fd_matches_analytic_rosenbrock_jacobian(rng):
    I = make_problem("I")
    for u in rng.uniform(-2, 2, size=(100, 2)):
        np.testing.assert_allclose(fd_jacobian(I, u).matrix, rosenbrock_jacobian(*u), atol=1e-5)


def _mean_smoothing_error(problem, U, exact, sigmas, M=20_000, seeds=10):
    errs = []
    for sigma in sigmas:
        cov = DiagonalCovariance.isotropic(sigma**2, problem.dim)
        e = [np.linalg.norm(smoothed_jacobian(problem, U, cov, M, (s, 9)).matrix - exact)
             for s in range(seeds)]
        errs.append(np.mean(e))
    return errs


def test_smoothing_error_shrinks_with_sigma():
    # Problem II has sin terms, so smoothing bias grows with sigma
    II = make_problem("II")
    U = np.array([0.3, -0.2])
    exact = fd_jacobian(II, U).matrix
    errs = _mean_smoothing_error(II, U, exact, (1.0, 0.1, 0.01))
    assert errs[0] > errs[1] > errs[2]


def test_smoothing_error_on_quadratic_residual_does_not_grow():
    # antithetic smoothing of a quadratic residual is unbiased at every sigma,
    # so only sampling noise remains and it does not depend on sigma
    I = make_problem("I")
    U = np.array([0.5, 0.2])
    errs = _mean_smoothing_error(I, U, rosenbrock_jacobian(*U), (1.0, 0.1, 0.01))
    assert errs[1] <= errs[0] * (1 + 1e-9) and errs[2] <= errs[1] * (1 + 1e-9)


def test_single_batch_of_size_M():
    p, counter = instrumented(make_problem("I"))
    ev = BatchEvaluator.for_problem(p)
    smoothed_jacobian(ev, [0.0, 0.0], DiagonalCovariance.isotropic(0.1, 2), 500 * 2, 0)
    assert counter.call_sizes == [1000] and ev.batches == 1


def test_nonfinite_residual_propagates():
    bad = BlackBoxResidual(lambda U: np.where(U > 0, np.nan, U), 1, 1)
    with pytest.raises(NonFiniteResidual):
        smoothed_jacobian(bad, [0.0], DiagonalCovariance([1.0]), 10, 0)
    with pytest.raises(NonFiniteResidual):
        fd_jacobian(bad, [0.0])
