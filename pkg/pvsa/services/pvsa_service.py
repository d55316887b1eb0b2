"""
PVSA Service - Distribution of |dV| under Gaussian power changes.

The stacked power change dS maps linearly onto dV_r = C_R . dS and
dV_i = C_I . dS. With dS ~ N(0, Sigma) both are Gaussian, |dV|^2 is fitted
by a Gamma law matching its first two moments, and |dV| is then Nakagami.
"""

import logging
from dataclasses import dataclass

import numpy as np

from pvsa.exceptions import DegenerateDistribution, DimensionMismatch, ZeroActorVoltage
from pvsa.models.distribution import (
    DiscretizedPdf,
    GammaParams,
    GaussianMoments,
    NakagamiParams,
    PowerChangeCovariance,
    SensitivityVectors,
    stack_power_changes,
)
from pvsa.models.loadflow import SolutionState
from pvsa.models.network import BusId, FeederGraph
from pvsa.models.phase import Phase
from pvsa.services.special_functions import nakagami_cdf, regularized_lower_incomplete_gamma

logger = logging.getLogger(__name__)


def build_sensitivity_vectors(
    graph: FeederGraph,
    base: SolutionState,
    observation: BusId,
    phase: Phase,
) -> SensitivityVectors:
    """C_R, C_I for one observation bus and phase.

    With R + jX the shared-path impedance Z_On^{ph} and |V|, w the operating
    voltage of phase h at bus n:
        C_R[P] = -(R cos w - X sin w) / |V|    C_R[Q] = -(R sin w + X cos w) / |V|
        C_I[P] = -(R sin w + X cos w) / |V|    C_I[Q] = -(X sin w - R cos w) / |V|
    """
    phase = Phase.parse(phase)
    o = graph.bus_index(observation)
    z = graph.shared_path_tensor()[o, :, phase.index, :]
    coupled = (z != 0) & graph.phase_mask

    magnitude = np.abs(base.voltages)
    if np.any(magnitude[coupled] == 0):
        raise ZeroActorVoltage(f"zero operating voltage at a bus coupled to observation {observation}")
    angle = np.angle(base.voltages)
    cos, sin = np.cos(angle), np.sin(angle)
    r, x = z.real, z.imag

    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(coupled, (r * cos - x * sin) / magnitude, 0.0)
        b = np.where(coupled, (r * sin + x * cos) / magnitude, 0.0)

    # P entries in the real part, Q entries in the imaginary part of the (n, 3) array.
    c_r = stack_power_changes(-a - 1j * b)
    c_i = stack_power_changes(-b + 1j * a)
    return SensitivityVectors(c_r, c_i, observation, phase)


def moments(vectors: SensitivityVectors, covariance: PowerChangeCovariance) -> GaussianMoments:
    if vectors.dimension != covariance.dimension:
        raise DimensionMismatch(
            f"sensitivity vectors have length {vectors.dimension}, covariance is {covariance.dimension}-dimensional"
        )
    support = covariance.support
    sigma = covariance.matrix[np.ix_(support, support)]
    c_r = vectors.c_r[support]
    c_i = vectors.c_i[support]
    var_r = max(float(c_r @ sigma @ c_r), 0.0)
    var_i = max(float(c_i @ sigma @ c_i), 0.0)
    limit = np.sqrt(var_r * var_i)
    cov = float(np.clip(c_r @ sigma @ c_i, -limit, limit))
    return GaussianMoments(var_r, var_i, cov)


def gamma_params(m: GaussianMoments) -> GammaParams:
    """Two-moment Gamma fit of |dV|^2 = dV_r^2 + dV_i^2."""
    total = m.var_r + m.var_i
    if not total > 0:
        raise DegenerateDistribution("voltage change has zero variance at this observation point")
    theta = 2.0 * (m.var_r**2 + m.var_i**2 + 2.0 * m.cov**2) / total
    return GammaParams(k=total / theta, theta=theta)


def nakagami_params(g: GammaParams) -> NakagamiParams:
    return NakagamiParams.from_gamma(g)


def violation_probability(params: NakagamiParams, threshold_pu: float, v_base: float) -> float:
    """P(|dV| > threshold)."""
    if threshold_pu < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold_pu}")
    t = threshold_pu * v_base
    return 1.0 - regularized_lower_incomplete_gamma(params.m, params.m * t * t / params.omega)


def discretize(params: NakagamiParams, edges_pu: np.ndarray, v_base: float) -> DiscretizedPdf:
    """Probability of each bin (edges in pu) by CDF differences."""
    edges_pu = np.asarray(edges_pu, dtype=float)
    cdf = nakagami_cdf(params, edges_pu * v_base)
    return DiscretizedPdf(edges_pu, np.clip(np.diff(cdf), 0.0, None))


@dataclass(frozen=True)
class DistributionFit:
    vectors: SensitivityVectors
    moments: GaussianMoments
    gamma: GammaParams
    nakagami: NakagamiParams
    v_base: float

    def violation_probability(self, threshold_pu: float) -> float:
        return violation_probability(self.nakagami, threshold_pu, self.v_base)

    @property
    def nakagami_pu(self) -> NakagamiParams:
        return self.nakagami.in_pu(self.v_base)


class PvsaService:
    """Distribution fits against one solved operating point."""

    def __init__(self, graph: FeederGraph, base: SolutionState):
        self.graph = graph
        self.base = base

    def sensitivity(self, observation: BusId, phase: Phase) -> SensitivityVectors:
        return build_sensitivity_vectors(self.graph, self.base, observation, phase)

    def fit(self, covariance: PowerChangeCovariance, observation: BusId, phase: Phase) -> DistributionFit:
        vectors = self.sensitivity(observation, phase)
        gaussian = moments(vectors, covariance)
        gamma = gamma_params(gaussian)
        nakagami = nakagami_params(gamma)
        logger.debug(
            f"Fit at {observation}/{Phase.parse(phase).value}: m={nakagami.m:.4f}, "
            f"omega={nakagami.omega / self.graph.v_base**2:.4e} pu^2"
        )
        return DistributionFit(vectors, gaussian, gamma, nakagami, self.graph.v_base)
