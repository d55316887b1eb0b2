"""
Sampling Service - Correlated Gaussian power changes.

Samples are drawn in fixed-size blocks; block k uses its own generator
seeded by SeedSequence(seed, spawn_key=(k,)), so the sample stream depends
only on (covariance, count, seed, block size) and never on how blocks are
distributed over workers.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy import linalg

from pvsa.config import settings
from pvsa.models.distribution import PowerChangeCovariance
from pvsa.services.covariance_service import ensure_psd

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Sigma[support, support] = L @ L.T, L of shape (len(support), rank)."""

    support: np.ndarray
    factor: np.ndarray
    dimension: int

    @property
    def rank(self) -> int:
        return self.factor.shape[1]


def factorize(covariance: PowerChangeCovariance) -> CovarianceFactor:
    """Symmetric eigen-factorisation; robust to rank deficiency."""
    covariance = ensure_psd(covariance)
    support = covariance.support
    if support.size == 0:
        return CovarianceFactor(support, np.zeros((0, 0)), covariance.dimension)
    eigenvalues, eigenvectors = linalg.eigh(covariance.matrix[np.ix_(support, support)])
    keep = eigenvalues > eigenvalues.max() * 1e-14
    factor = eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])
    return CovarianceFactor(support, factor, covariance.dimension)


def block_plan(count: int, block_size: Optional[int] = None) -> List[Tuple[int, int]]:
    """[(block index, size), ...] covering ``count`` samples."""
    if count < 0:
        raise ValueError(f"sample count must be >= 0, got {count}")
    block_size = block_size or settings.mc_block_size
    return [(k, min(block_size, count - start)) for k, start in enumerate(range(0, count, block_size))]


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def sample_support(factor: CovarianceFactor, seed: int, block: int, size: int) -> np.ndarray:
    """(size, len(support)) samples of the nonzero coordinates for one block."""
    if factor.rank == 0:
        return np.zeros((size, factor.support.size))
    draws = block_rng(seed, block).standard_normal((size, factor.rank))
    return draws @ factor.factor.T


def sample_block(factor: CovarianceFactor, seed: int, block: int, size: int) -> np.ndarray:
    """(size, 6n) full stacked samples for one block, VA."""
    full = np.zeros((size, factor.dimension))
    full[:, factor.support] = sample_support(factor, seed, block, size)
    return full


def iter_blocks(
    covariance: PowerChangeCovariance, count: int, seed: int, block_size: Optional[int] = None
) -> Iterator[np.ndarray]:
    factor = factorize(covariance)
    for block, size in block_plan(count, block_size):
        yield sample_block(factor, seed, block, size)


def sample_power_changes(
    covariance: PowerChangeCovariance, count: int, seed: int, block_size: Optional[int] = None
) -> np.ndarray:
    """(count, 6n) zero-mean Gaussian samples with covariance Sigma."""
    blocks = list(iter_blocks(covariance, count, seed, block_size))
    if not blocks:
        return np.zeros((0, covariance.dimension))
    logger.debug(f"Drew {count} samples in {len(blocks)} block(s)")
    return np.concatenate(blocks, axis=0)
