from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import mean_norm_2d

from gnmppi.exceptions import OddBatchWithAntithetic
from gnmppi.sampling import DiagonalCovariance, draw, mc_error_bound, verify_mc_bound


def test_covariance_validation():
    with pytest.raises(ValueError):
        DiagonalCovariance([1.0, 0.0])
    with pytest.raises(ValueError):
        DiagonalCovariance([1.0, np.inf])
    cov = DiagonalCovariance([1.0, 4.0])
    assert cov.trace == 5.0
    np.testing.assert_array_equal(cov.std, [1.0, 2.0])
    assert cov.scaled(0.5).trace == 2.5
    with pytest.raises(ValueError):
        cov.diag[0] = 3.0  # read-only


def test_antithetic_small_batch_has_zero_mean():
    W = draw(DiagonalCovariance.isotropic(1.0, 3), 4, seed=7).perturbations
    # summing each mirrored pair first, the mean is exactly zero
    np.testing.assert_array_equal((W[:2] + W[2:]).sum(axis=0) / 4, np.zeros(3))


def test_odd_batch_rejected():
    with pytest.raises(OddBatchWithAntithetic):
        draw(DiagonalCovariance.isotropic(1.0, 2), 5, seed=0, antithetic=True)
    assert draw(DiagonalCovariance.isotropic(1.0, 2), 5, seed=0, antithetic=False).size == 5


def test_empirical_variance():
    s = draw(DiagonalCovariance([4.0]), 100_000, seed=3, antithetic=False)
    assert 3.9 <= s.perturbations.var() <= 4.1


@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(1, 5), st.booleans())
def test_seed_determinism_and_pairing(seed, half, dim, anti):
    cov = DiagonalCovariance(np.linspace(0.5, 2.0, dim))
    a = draw(cov, 2 * half, seed, anti)
    b = draw(cov, 2 * half, seed, anti)
    np.testing.assert_array_equal(a.perturbations, b.perturbations)
    if anti:
        W = a.perturbations
        # exact bitwise negation
        assert np.array_equal(W[half:], -W[:half])
        assert np.array_equal(np.signbit(W[half:]), ~np.signbit(W[:half]))


def test_tuple_seeds_give_independent_streams():
    cov = DiagonalCovariance.isotropic(1.0, 4)
    a = draw(cov, 10, (0, 1)).perturbations
    b = draw(cov, 10, (0, 2)).perturbations
    assert not np.array_equal(a, b)


def test_mc_error_bound_examples():
    assert mc_error_bound(DiagonalCovariance.isotropic(1.0, 2), 100) == pytest.approx(math.sqrt(2) / 10)
    assert mc_error_bound(DiagonalCovariance.isotropic(1.0, 1), 1) == 1.0
    sigma, nx, n = 0.3, 7, 50
    got = mc_error_bound(DiagonalCovariance.isotropic(sigma**2, nx), n)
    assert got == pytest.approx(math.sqrt(nx) * sigma / math.sqrt(n))
    with pytest.raises(ValueError):
        mc_error_bound(DiagonalCovariance.isotropic(1.0, 1), 0)


def test_verify_mc_bound_examples():
    cov = DiagonalCovariance.isotropic(1.0, 2)
    emp, bound = verify_mc_bound(cov, 100, 1000, seed=1)
    assert emp < 0.1415
    assert emp == pytest.approx(mean_norm_2d(1.0, 100), rel=0.05)
    e1, _ = verify_mc_bound(cov, 1, 1, seed=2)
    assert np.isfinite(e1) and e1 >= 0.0


def test_quadrupling_n_halves_error():
    cov = DiagonalCovariance.isotropic(1.0, 2)
    e1, _ = verify_mc_bound(cov, 200, 2000, seed=4)
    e4, _ = verify_mc_bound(cov, 800, 2000, seed=5)
    assert e4 / e1 == pytest.approx(0.5, rel=0.1)


@pytest.mark.parametrize("dim,var", [(1, 1.0), (3, 0.25), (5, 2.0)])
def test_mc_bound_with_slack(dim, var):
    trials = 1000
    cov = DiagonalCovariance.isotropic(var, dim)
    emp, bound = verify_mc_bound(cov, 64, trials, seed=dim)
    assert emp <= bound * (1 + 3 / math.sqrt(trials))


def test_convergence_slope():
    cov = DiagonalCovariance.isotropic(1.0, 2)
    ns = np.array([100, 1000, 10000])
    errs = [verify_mc_bound(cov, int(n), 300, seed=int(n))[0] for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert -0.6 <= slope <= -0.4
