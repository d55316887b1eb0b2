"""
Stochastic voltage-sensitivity types.

Stacked power-change vectors have length 6n with layout
[ds^a ds^b ds^c], each ds^h = [dP_1..dP_n, dQ_1..dQ_n], buses in graph order.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from pvsa.exceptions import BinningMismatch, DimensionMismatch, InvalidShape
from pvsa.models.network import BusId
from pvsa.models.phase import Phase

P, Q = 0, 1


def stacked_index(n: int, phase: Phase, kind: int, bus_index: int) -> int:
    """Position of (phase, P|Q, bus) in a stacked 6n vector."""
    return phase.index * 2 * n + kind * n + bus_index


def stack_power_changes(array: np.ndarray) -> np.ndarray:
    """(..., n, 3) complex -> (..., 6n) real stacked vector."""
    array = np.asarray(array, dtype=complex)
    per_phase = np.concatenate([array.real, array.imag], axis=-2)  # (..., 2n, 3)
    return np.moveaxis(per_phase, -1, -2).reshape(*array.shape[:-2], -1)


def unstack_power_changes(vector: np.ndarray, n: int) -> np.ndarray:
    """(..., 6n) real stacked vector -> (..., n, 3) complex."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape[-1] != 6 * n:
        raise DimensionMismatch(f"stacked vector has length {vector.shape[-1]}, expected {6 * n}")
    blocks = vector.reshape(*vector.shape[:-1], 3, 2, n)
    return np.moveaxis(blocks[..., 0, :] + 1j * blocks[..., 1, :], -2, -1)


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PowerChangeCovariance:
    """6n x 6n covariance of the stacked power change, VA^2."""

    buses: Tuple[BusId, ...]
    matrix: np.ndarray
    actors: Tuple[BusId, ...] = ()

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        size = 6 * len(self.buses)
        if matrix.shape != (size, size):
            raise DimensionMismatch(f"covariance is {matrix.shape}, expected ({size}, {size})")
        object.__setattr__(self, "matrix", _readonly(matrix))
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "actors", tuple(self.actors))

    @classmethod
    def zeros(cls, buses: Tuple[BusId, ...]) -> "PowerChangeCovariance":
        return cls(buses, np.zeros((6 * len(buses), 6 * len(buses))))

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def dimension(self) -> int:
        return 6 * len(self.buses)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def support(self) -> np.ndarray:
        """Indices with nonzero variance."""
        return np.flatnonzero(np.diag(self.matrix) > 0)


@dataclass(frozen=True, eq=False)
class SensitivityVectors:
    """Linear map from stacked power change (VA) to real/imag dV (volts)."""

    c_r: np.ndarray
    c_i: np.ndarray
    observation: BusId
    phase: Phase

    def __post_init__(self) -> None:
        object.__setattr__(self, "c_r", _readonly(self.c_r))
        object.__setattr__(self, "c_i", _readonly(self.c_i))
        if self.c_r.shape != self.c_i.shape or self.c_r.ndim != 1:
            raise DimensionMismatch("C_R and C_I must be vectors of equal length")

    @property
    def dimension(self) -> int:
        return self.c_r.shape[0]

    def apply(self, ds: np.ndarray) -> np.ndarray:
        """Complex dV for one stacked vector or a (samples, 6n) batch."""
        ds = np.asarray(ds, dtype=float)
        if ds.shape[-1] != self.dimension:
            raise DimensionMismatch(f"power change has length {ds.shape[-1]}, expected {self.dimension}")
        return ds @ self.c_r + 1j * (ds @ self.c_i)


@dataclass(frozen=True)
class GaussianMoments:
    """Second moments of (dV_r, dV_i), volts^2."""

    var_r: float
    var_i: float
    cov: float

    @property
    def total(self) -> float:
        return self.var_r + self.var_i

    @property
    def correlation(self) -> float:
        denom = math.sqrt(self.var_r * self.var_i)
        return self.cov / denom if denom > 0 else 0.0


@dataclass(frozen=True)
class GammaParams:
    """Gamma(k, theta) law of |dV|^2; theta in volts^2."""

    k: float
    theta: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and self.theta > 0):
            raise InvalidShape(f"gamma parameters must be positive, got k={self.k}, theta={self.theta}")

    @property
    def mean(self) -> float:
        return self.k * self.theta

    @property
    def variance(self) -> float:
        return self.k * self.theta**2


@dataclass(frozen=True)
class NakagamiParams:
    """Nakagami(m, Omega) law of |dV|; Omega = E[|dV|^2] in volts^2."""

    m: float
    omega: float

    def __post_init__(self) -> None:
        if not (self.m > 0 and self.omega > 0):
            raise InvalidShape(f"Nakagami parameters must be positive, got m={self.m}, omega={self.omega}")

    @classmethod
    def from_gamma(cls, gamma: GammaParams) -> "NakagamiParams":
        return cls(m=gamma.k, omega=gamma.k * gamma.theta)

    @property
    def mean(self) -> float:
        return math.exp(math.lgamma(self.m + 0.5) - math.lgamma(self.m)) * math.sqrt(self.omega / self.m)

    @property
    def mode(self) -> float:
        if self.m < 0.5:
            return 0.0
        return math.sqrt(self.omega * (2 * self.m - 1) / (2 * self.m))

    def in_pu(self, v_base: float) -> "NakagamiParams":
        return NakagamiParams(self.m, self.omega / v_base**2)


@dataclass(frozen=True, eq=False)
class EmpiricalHistogram:
    """Counts of |dV| samples over uniform bins; edges in pu."""

    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        edges = _readonly(self.edges)
        counts = np.array(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        if edges.ndim != 1 or counts.shape != (edges.shape[0] - 1,):
            raise BinningMismatch("histogram needs len(edges) == len(counts) + 1")
        if np.any(counts < 0) or int(counts.sum()) != self.total:
            raise ValueError("histogram counts must be nonnegative and sum to total")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        return self.probabilities / np.diff(self.edges)


@dataclass(frozen=True, eq=False)
class DiscretizedPdf:
    """Probability mass of a continuous law integrated over each bin; edges in pu."""

    edges: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", _readonly(self.edges))
        object.__setattr__(self, "probabilities", _readonly(self.probabilities))
        if self.probabilities.shape != (self.edges.shape[0] - 1,):
            raise BinningMismatch("pdf needs len(edges) == len(probabilities) + 1")

    @property
    def density(self) -> np.ndarray:
        return self.probabilities / np.diff(self.edges)
