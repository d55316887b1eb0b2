"""
Monte-Carlo Service - Empirical |dV| distributions and their comparison.

Two per-sample evaluators:
  linear  dV = C_R . dS + j C_I . dS
  oracle  dV = V_base - V(loads - dS), one batched load flow per block
"""

import logging
import time
from typing import Dict, Literal, Optional, Union

import numpy as np
from scipy.spatial import distance

from pvsa.config import settings
from pvsa.exceptions import BinningMismatch, DegenerateDistribution
from pvsa.models.distribution import (
    DiscretizedPdf,
    EmpiricalHistogram,
    PowerChangeCovariance,
    unstack_power_changes,
)
from pvsa.models.loadflow import SolutionState
from pvsa.models.network import BusId, FeederGraph, LoadSpec
from pvsa.models.phase import Phase
from pvsa.services.loadflow_service import LoadFlowService
from pvsa.services.pvsa_service import build_sensitivity_vectors
from pvsa.services.sampling_service import block_plan, factorize, sample_block, sample_support
from pvsa.workers.mc_pool import run_blocks

logger = logging.getLogger(__name__)

Mode = Literal["linear", "oracle"]


def histogram(
    magnitudes_pu: np.ndarray,
    bins: Optional[int] = None,
    headroom: Optional[float] = None,
) -> EmpiricalHistogram:
    """Uniform bins over [0, max * headroom]; [0, 1] pu when every sample is zero."""
    bins = bins or settings.histogram_bins
    headroom = headroom or settings.histogram_headroom
    magnitudes_pu = np.asarray(magnitudes_pu, dtype=float)
    peak = float(magnitudes_pu.max()) if magnitudes_pu.size else 0.0
    upper = peak * headroom if peak > 0 else 1.0
    edges = np.linspace(0.0, upper, bins + 1)
    counts, _ = np.histogram(magnitudes_pu, bins=edges)
    return EmpiricalHistogram(edges, counts, int(magnitudes_pu.size))


Binned = Union[EmpiricalHistogram, DiscretizedPdf]


def js_distance(p: Binned, q: Binned) -> float:
    """Jensen-Shannon distance (base 2) between two distributions on identical bins."""
    if p.edges.shape != q.edges.shape or not np.allclose(p.edges, q.edges, rtol=1e-12, atol=0.0):
        raise BinningMismatch("distributions use different bin edges")
    p_mass = np.asarray(p.probabilities, dtype=float)
    q_mass = np.asarray(q.probabilities, dtype=float)
    if not (p_mass.sum() > 0 and q_mass.sum() > 0):
        raise DegenerateDistribution("cannot compare a distribution with no mass in range")
    value = distance.jensenshannon(p_mass / p_mass.sum(), q_mass / q_mass.sum(), base=2)
    return float(np.clip(value, 0.0, 1.0))


class MonteCarloService:
    """Seeded, block-parallel sampling of the voltage change at an observation point."""

    def __init__(
        self,
        graph: FeederGraph,
        loads: LoadSpec,
        base: SolutionState,
        loadflow: Optional[LoadFlowService] = None,
        jobs: int = 1,
        block_size: Optional[int] = None,
    ):
        self.graph = graph
        self.loads = loads
        self.base = base
        self.loadflow = loadflow or LoadFlowService()
        self.jobs = jobs
        self.block_size = block_size or settings.mc_block_size

    def delta_v_samples(
        self,
        covariance: PowerChangeCovariance,
        observation: BusId,
        phase: Phase,
        count: int,
        seed: int,
        mode: Mode = "linear",
    ) -> np.ndarray:
        """(count,) complex dV samples in volts."""
        phase = Phase.parse(phase)
        o = self.graph.bus_index(observation)
        factor = factorize(covariance)
        plan = block_plan(count, self.block_size)
        started = time.perf_counter()

        if mode == "linear":
            vectors = build_sensitivity_vectors(self.graph, self.base, observation, phase)
            c_r = vectors.c_r[factor.support]
            c_i = vectors.c_i[factor.support]

            def task(block: int, size: int) -> np.ndarray:
                x = sample_support(factor, seed, block, size)
                return x @ c_r + 1j * (x @ c_i)

        elif mode == "oracle":
            base_loads = self.loads.as_array(self.graph)
            v_obs = self.base.voltages[o, phase.index]

            def task(block: int, size: int) -> np.ndarray:
                ds = unstack_power_changes(sample_block(factor, seed, block, size), self.graph.n_buses)
                voltages = self.loadflow.solve_many(self.graph, base_loads[None] - ds, self.base.source_voltage)
                return v_obs - voltages[:, o, phase.index]

        else:
            raise ValueError(f"unknown Monte-Carlo mode {mode!r}")

        parts = run_blocks(task, plan, self.jobs)
        samples = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
        logger.info(
            f"Monte-Carlo ({mode}) finished: {count} samples, {len(plan)} blocks, "
            f"{time.perf_counter() - started:.2f}s",
            extra={"extra": {"mode": mode, "samples": count, "blocks": len(plan), "jobs": self.jobs}},
        )
        return samples

    def mc_distribution(
        self,
        covariance: PowerChangeCovariance,
        observation: BusId,
        phase: Phase,
        count: int,
        seed: int,
        mode: Mode = "linear",
    ) -> EmpiricalHistogram:
        samples = self.delta_v_samples(covariance, observation, phase, count, seed, mode)
        return histogram(np.abs(samples) / self.graph.v_base)

    def network_magnitudes(
        self,
        covariance: PowerChangeCovariance,
        phase: Phase,
        count: int,
        seed: int,
    ) -> Dict[BusId, np.ndarray]:
        """Linear-mode |dV| samples (pu) at every bus carrying ``phase``, from one shared sample set."""
        phase = Phase.parse(phase)
        factor = factorize(covariance)
        buses = [bus for bus in self.graph.buses if phase in self.graph.phases_of(bus)]
        vectors = [build_sensitivity_vectors(self.graph, self.base, bus, phase) for bus in buses]
        c_r = np.stack([v.c_r[factor.support] for v in vectors])
        c_i = np.stack([v.c_i[factor.support] for v in vectors])

        def task(block: int, size: int) -> np.ndarray:
            x = sample_support(factor, seed, block, size)
            return np.abs(x @ c_r.T + 1j * (x @ c_i.T)) / self.graph.v_base

        parts = run_blocks(task, block_plan(count, self.block_size), self.jobs)
        magnitudes = np.concatenate(parts) if parts else np.zeros((0, len(buses)))
        return {bus: magnitudes[:, k] for k, bus in enumerate(buses)}
