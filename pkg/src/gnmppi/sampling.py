"""Seeded Gaussian perturbations with antithetic pairing, and the Monte Carlo
error bound ``E||mean_n - mu||_2 <= sqrt(tr(Sigma) / n)``.

Generators are Philox (counter-based) streams keyed by a ``SeedSequence``, so
a batch is a pure function of its seed key regardless of how many workers
consume it.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gnmppi.exceptions import OddBatchWithAntithetic

Array = NDArray[np.float64]
SeedLike = int | Sequence[int]


@dataclass(frozen=True)
class DiagonalCovariance:
    """Diagonal covariance ``Sigma = diag(diag)`` with strictly positive entries."""

    diag: Array

    def __post_init__(self) -> None:
        diag = np.asarray(self.diag, dtype=float).reshape(-1)
        if diag.size == 0 or not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ValueError("covariance diagonal must be finite and strictly positive")
        diag.setflags(write=False)
        object.__setattr__(self, "diag", diag)

    @classmethod
    def isotropic(cls, variance: float, dim: int) -> DiagonalCovariance:
        return cls(np.full(dim, float(variance)))

    @classmethod
    def from_std(cls, std: ArrayLike, dim: int | None = None) -> DiagonalCovariance:
        std = np.asarray(std, dtype=float).reshape(-1)
        if dim is not None and std.size == 1:
            std = np.full(dim, std[0])
        return cls(std**2)

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def std(self) -> Array:
        return np.sqrt(self.diag)

    @property
    def inverse_diag(self) -> Array:
        return 1.0 / self.diag

    @property
    def trace(self) -> float:
        return float(np.sum(self.diag))

    def scaled(self, factor: float) -> DiagonalCovariance:
        return DiagonalCovariance(self.diag * factor)


@dataclass(frozen=True)
class SampleBatch:
    """``M`` perturbations ``W_m`` stored row-wise, shape ``(M, dim)``."""

    perturbations: Array
    seed: tuple[int, ...]
    antithetic: bool

    @property
    def size(self) -> int:
        return self.perturbations.shape[0]


def _seed_key(seed: SeedLike) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(_seed_key(seed)))))


def draw(
    cov: DiagonalCovariance, M: int, seed: SeedLike, antithetic: bool = True
) -> SampleBatch:
    """Draw ``M`` samples of ``N(0, cov)``.

    With ``antithetic=True`` the first ``M/2`` rows are i.i.d. and the second
    half is their exact negation, ``W[m + M/2] = -W[m]``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if antithetic and M % 2:
        raise OddBatchWithAntithetic(f"antithetic sampling needs an even batch, got M={M}")
    rng = make_rng(seed)
    n_free = M // 2 if antithetic else M
    free = rng.standard_normal((n_free, cov.dim)) * cov.std
    W = np.concatenate([free, -free]) if antithetic else free
    W.setflags(write=False)
    return SampleBatch(W, _seed_key(seed), antithetic)


def mc_error_bound(cov: DiagonalCovariance, n: int) -> float:
    """Upper bound ``sqrt(tr(Sigma) / n)`` on the expected empirical-mean error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.sqrt(cov.trace / n))


def verify_mc_bound(
    cov: DiagonalCovariance, n: int, trials: int, seed: SeedLike = 0, chunk: int = 2_000_000
) -> tuple[float, float]:
    """Average ``||mean of n draws||_2`` over ``trials`` repetitions.

    Draws every one of the ``trials * n`` samples explicitly.  Returns
    ``(empirical_mean_error, bound)``.
    """
    if trials < 1 or n < 1:
        raise ValueError("trials and n must be >= 1")
    rng = make_rng(seed)
    per_chunk = max(1, chunk // (n * cov.dim))
    errors = []
    done = 0
    while done < trials:
        t = min(per_chunk, trials - done)
        X = rng.standard_normal((t, n, cov.dim)) * cov.std
        errors.append(np.linalg.norm(X.mean(axis=1), axis=1))
        done += t
    return float(np.mean(np.concatenate(errors))), mc_error_bound(cov, n)
