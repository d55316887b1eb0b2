"""
VSA Service - Closed-form voltage change and its error bound.

dV^p = -sum_h conj(dS^h) * Z^{ph} / conj(V^h), with Z the impedance shared by
the observation and actor paths, dS the injected power change and V the
operating-point actor voltage. Multi-actor changes superpose.
"""

import logging
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from pvsa.exceptions import ZeroActorVoltage
from pvsa.models.loadflow import SolutionState
from pvsa.models.network import BusId, FeederGraph, NodeVoltage, PhaseImpedanceMatrix
from pvsa.models.phase import PHASES
from pvsa.models.scenario import DeterministicScenario
from pvsa.models.vsa import ActorCoefficients, ActorPerturbation, ErrorBoundTerms, PhasePairTerm, VoltageChange

logger = logging.getLogger(__name__)

Perturbations = Union[DeterministicScenario, Sequence[ActorPerturbation]]


def _coupled(z_oa: PhaseImpedanceMatrix, ds: ActorPerturbation) -> np.ndarray:
    return (ds.ds != 0) & np.any(z_oa.values != 0, axis=0)


def _check_voltage(v_actor: NodeVoltage, coupled: np.ndarray, bus: BusId) -> None:
    if np.any(np.abs(v_actor.values[coupled]) == 0):
        raise ZeroActorVoltage(f"actor {bus} has zero operating voltage on a coupled phase")


def delta_v_single(
    z_oa: PhaseImpedanceMatrix,
    ds: ActorPerturbation,
    v_actor: NodeVoltage,
    v_base: float = 1.0,
) -> VoltageChange:
    """Voltage change at the observation bus caused by one actor."""
    coupled = _coupled(z_oa, ds)
    _check_voltage(v_actor, coupled, ds.bus)
    coefficient = np.zeros(3, dtype=complex)
    coefficient[coupled] = np.conj(ds.ds[coupled]) / np.conj(v_actor.values[coupled])
    return VoltageChange(-(z_oa.values @ coefficient), v_base)


def error_bound(
    z_oa: PhaseImpedanceMatrix,
    ds: ActorPerturbation,
    v_actor: NodeVoltage,
    v_base: float = 1.0,
) -> ErrorBoundTerms:
    """Bound on the real/imaginary approximation error for one actor.

    For each pair (observation phase p, actor phase h) with R + jX = Z^{ph}:
        k1 = dP R + dQ X,  k2 = dP X - dQ R
        real += |k1| |Vr| / |V|^2 + |k2| |Vi| / |V|^2
        imag += |k2| |Vr| / |V|^2 + |k1| |Vi| / |V|^2
    """
    coupled = _coupled(z_oa, ds)
    _check_voltage(v_actor, coupled, ds.bus)

    bound_real = np.zeros(3)
    bound_imag = np.zeros(3)
    terms: List[PhasePairTerm] = []
    for h in PHASES:
        if not coupled[h.index]:
            continue
        dp, dq = ds.ds[h.index].real, ds.ds[h.index].imag
        v = v_actor.values[h.index]
        vr, vi = abs(v.real), abs(v.imag)
        v_sq = vr * vr + vi * vi
        c1 = (vi / vr) ** 2 if vr else np.inf
        c2 = (vr / vi) ** 2 if vi else np.inf
        for p in PHASES:
            z = z_oa.values[p.index, h.index]
            if z == 0:
                continue
            k1 = dp * z.real + dq * z.imag
            k2 = dp * z.imag - dq * z.real
            real = (abs(k1) * vr + abs(k2) * vi) / v_sq
            imag = (abs(k2) * vr + abs(k1) * vi) / v_sq
            bound_real[p.index] += real
            bound_imag[p.index] += imag
            terms.append(PhasePairTerm(p, h, k1, k2, c1, c2, real, imag))
    return ErrorBoundTerms(v_base, bound_real, bound_imag, tuple(terms))


class VsaService:
    """Analytic queries against one solved operating point."""

    def __init__(self, graph: FeederGraph, base: SolutionState):
        self.graph = graph
        self.base = base
        self._tensor = graph.shared_path_tensor()

    def _perturbations(self, perturbations: Perturbations) -> List[ActorPerturbation]:
        if isinstance(perturbations, DeterministicScenario):
            perturbations = perturbations.perturbations()
        result = list(perturbations)
        for perturbation in result:
            perturbation.check_phases(self.graph.phases_of(perturbation.bus))
        return result

    def delta_v_multi(self, perturbations: Perturbations, observation: BusId) -> VoltageChange:
        """Sum of single-actor changes at ``observation``."""
        graph = self.graph
        graph.bus_index(observation)
        total = VoltageChange.zero(graph.v_base, graph.phases_of(observation))
        for perturbation in self._perturbations(perturbations):
            z_oa = graph.shared_path_impedance(observation, perturbation.bus)
            total = total + delta_v_single(z_oa, perturbation, self.base.voltage(perturbation.bus), graph.v_base)
        return total

    def prepare(self, perturbations: Perturbations) -> ActorCoefficients:
        """Fold the perturbations into per-actor coefficients for repeated queries."""
        graph = self.graph
        merged = {}
        for perturbation in self._perturbations(perturbations):
            i = graph.bus_index(perturbation.bus)
            v = self.base.voltages[i]
            coupled = perturbation.ds != 0
            if np.any(np.abs(v[coupled]) == 0):
                raise ZeroActorVoltage(f"actor {perturbation.bus} has zero operating voltage on a perturbed phase")
            row = merged.setdefault(i, np.zeros(3, dtype=complex))
            row[coupled] += np.conj(perturbation.ds[coupled]) / np.conj(v[coupled])
        rows = sorted(merged)
        return ActorCoefficients(rows, [merged[i] for i in rows])

    def query(self, prepared: ActorCoefficients, observation: BusId) -> VoltageChange:
        """dV at ``observation`` from precomputed coefficients; cost depends on the actor count only."""
        o = self.graph.bus_index(observation)
        values = -np.einsum("aph,ah->p", self._tensor[o, prepared.rows], prepared.values)
        return VoltageChange(values, self.graph.v_base, self.graph.bus_phases[observation])

    def delta_v_profile(self, perturbations: Perturbations) -> np.ndarray:
        """(n_buses, 3) analytic dV at every bus, zero on absent phases."""
        prepared = self.prepare(perturbations)
        delta = -np.einsum("oaph,ah->op", self._tensor[:, prepared.rows], prepared.values)
        return np.where(self.graph.phase_mask, delta, 0)

    def error_bound_multi(self, perturbations: Perturbations, observation: BusId) -> ErrorBoundTerms:
        """Per-actor bounds summed (triangle inequality)."""
        graph = self.graph
        graph.bus_index(observation)
        total = ErrorBoundTerms.zero(graph.v_base)
        for perturbation in self._perturbations(perturbations):
            z_oa = graph.shared_path_impedance(observation, perturbation.bus)
            total = total + error_bound(z_oa, perturbation, self.base.voltage(perturbation.bus), graph.v_base)
        return total

    def error_bound_profile(self, perturbations: Perturbations, buses: Optional[Iterable[BusId]] = None) -> np.ndarray:
        """(n_buses, 3) bound magnitude in volts; rows outside ``buses`` are zero."""
        perturbations = self._perturbations(perturbations)
        result = np.zeros((self.graph.n_buses, 3))
        for bus in buses if buses is not None else self.graph.buses:
            result[self.graph.bus_index(bus)] = self.error_bound_multi(perturbations, bus).bound_mag
        return np.where(self.graph.phase_mask, result, 0)
