"""Monte-Carlo oracle: sample quadrature fluctuations and reconstruct noise powers.

Sampling is counter-based: sample block j is a pure function of (seed, j), so
any batching or parallel execution reproduces bit-identical moments as long as
block partials are folded in index order.  The block size is a fixed internal
constant; McConfig.batch only groups blocks into work chunks and never changes
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .beam import NoiseCovariance
from .errors import NumericError, UsageError

BLOCK = 4096
EIG_CLAMP = -1e-9


@dataclass(frozen=True)
class McConfig:
    """Sample count, seed and work-chunk size for the Monte-Carlo oracle."""

    samples_m: int = 1_000_000
    seed: int = 0
    batch: int = 16 * BLOCK

    def __post_init__(self):
        if self.samples_m < 1_000:
            raise UsageError(
                f"samples_m must be >= 1000 for the tolerance model, got {self.samples_m}"
            )
        if self.batch < 1:
            raise UsageError(f"batch must be >= 1, got {self.batch}")


def counter_normals(seed: int, block_index: int, n: int, dim: int | None = None) -> np.ndarray:
    """Standard normals for block block_index, reproducible for any call order."""
    bits = np.random.Philox(key=seed, counter=[0, 0, 0, block_index])
    gen = np.random.Generator(bits)
    shape = (n,) if dim is None else (n, dim)
    return gen.standard_normal(shape)


def factor_covariance(cov: NoiseCovariance) -> np.ndarray:
    """Symmetric factor A with A A^T = C via eigendecomposition.

    Eigenvalues in [-1e-9, 0) are clamped to 0 (floating-point PSD drift from
    covariance updates); anything more negative raises NumericError.
    """
    m = 0.5 * (cov.matrix + cov.matrix.T)
    eigvals, eigvecs = np.linalg.eigh(m)
    worst = float(eigvals.min())
    if worst < EIG_CLAMP:
        raise NumericError(f"covariance is not PSD: eigenvalue {worst:.3e} < {EIG_CLAMP}")
    eigvals = np.clip(eigvals, 0.0, None)
    return eigvecs * np.sqrt(eigvals)


def _blocks(samples_m: int) -> Iterator[tuple[int, int]]:
    """(block_index, size) pairs covering samples_m samples in index order."""
    full, rem = divmod(samples_m, BLOCK)
    for j in range(full):
        yield j, BLOCK
    if rem:
        yield full, rem


def sample_quadratures(cov: NoiseCovariance, cfg: McConfig) -> Iterator[np.ndarray]:
    """Stream zero-mean Gaussian sample blocks with covariance cov.

    Yields arrays of shape (block, 2*(n_max+2)) in block-index order; the
    concatenation holds cfg.samples_m samples total.
    """
    a = factor_covariance(cov)
    dim = a.shape[0]
    for j, n in _blocks(cfg.samples_m):
        yield counter_normals(cfg.seed, j, n, dim) @ a.T


def empirical_moments(cov: NoiseCovariance, cfg: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of the quadrature stream (left-fold over blocks)."""
    dim = cov.matrix.shape[0]
    s1 = np.zeros(dim)
    s2 = np.zeros((dim, dim))
    for xs in sample_quadratures(cov, cfg):
        s1 += xs.sum(axis=0)
        s2 += xs.T @ xs
    m = cfg.samples_m
    mean = s1 / m
    emp = (s2 - np.outer(s1, s1) / m) / (m - 1)
    return mean, emp


def mc_noise_power(cov: NoiseCovariance, projection: np.ndarray, cfg: McConfig) -> float:
    """Empirical variance of the quadrature projection v . X; matches v^T C v to ~3 sqrt(2/M).

    The projection is applied before sampling (scalar stream), so M = 1e7 runs
    in seconds.
    """
    v = np.asarray(projection, dtype=float)
    if v.shape != (cov.matrix.shape[0],):
        raise UsageError(
            f"projection length {v.shape} does not match covariance dimension "
            f"{cov.matrix.shape[0]}"
        )
    if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
        raise UsageError("projection must be unit norm")
    w = factor_covariance(cov).T @ v
    s1 = 0.0
    s2 = 0.0
    for j, n in _blocks(cfg.samples_m):
        s = counter_normals(cfg.seed, j, n, len(w)) @ w
        s1 += float(s.sum())
        s2 += float(s @ s)
    m = cfg.samples_m
    return (s2 - s1 * s1 / m) / (m - 1)


def statistical_tolerance(samples_m: int) -> float:
    """Three-sigma relative tolerance of a variance estimate: 3 sqrt(2/M)."""
    return 3.0 * math.sqrt(2.0 / samples_m)
