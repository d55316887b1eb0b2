"""
Load Flow Service - Backward/forward sweep for radial unbalanced feeders.

Constant-power wye loads, slack source, flat start. Each sweep computes load
currents I = conj(S / V), aggregates them into branch currents and
subtracts the accumulated path drops from the source voltage. All arrays
carry a leading batch axis so many load cases share one sweep.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from pvsa.exceptions import NonConvergence, VoltageCollapse
from pvsa.models.loadflow import SolutionState, SolveSettings
from pvsa.models.network import BusId, FeederGraph, LoadSpec, NodeVoltage
from pvsa.models.phase import PHASES, Phase
from pvsa.models.scenario import DeterministicScenario

logger = logging.getLogger(__name__)


class LoadFlowService:
    """Ground-truth solver. Stateless apart from its settings."""

    def __init__(self, settings: Optional[SolveSettings] = None):
        self.settings = settings or SolveSettings.from_settings()

    def solve(
        self,
        graph: FeederGraph,
        loads: LoadSpec,
        source_voltage: Optional[NodeVoltage] = None,
    ) -> SolutionState:
        voltages, iterations, mismatch = self._sweep(graph, loads.as_array(graph)[None], source_voltage)
        logger.debug(f"Solved {graph.name} in {iterations[0]} iterations (mismatch {mismatch[0]:.2e} pu)")
        return SolutionState(
            graph, voltages[0], int(iterations[0]), float(mismatch[0]), source_voltage or graph.source_voltage
        )

    def solve_many(
        self,
        graph: FeederGraph,
        loads: np.ndarray,
        source_voltage: Optional[NodeVoltage] = None,
    ) -> np.ndarray:
        """Solve a (batch, n_buses, 3) stack of drawn powers; returns voltages of the same shape.

        Cases stop updating individually once converged, so each result
        equals what ``solve`` returns for that case.
        """
        loads = np.asarray(loads, dtype=complex)
        if loads.ndim != 3 or loads.shape[1:] != (graph.n_buses, 3):
            raise ValueError(f"load batch must be (batch, {graph.n_buses}, 3), got {loads.shape}")
        voltages, iterations, _ = self._sweep(graph, loads, source_voltage)
        if len(iterations):
            logger.debug(f"Solved batch of {len(iterations)} cases, max {iterations.max()} iterations")
        return voltages

    def delta_v_array(
        self,
        graph: FeederGraph,
        loads: LoadSpec,
        scenario: DeterministicScenario,
        base: Optional[SolutionState] = None,
        source_voltage: Optional[NodeVoltage] = None,
    ) -> np.ndarray:
        """(n_buses, 3) complex V_base - V_perturbed, both solved at the same source voltage."""
        base = base or self.solve(graph, loads, source_voltage)
        perturbed_loads = loads.as_array(graph) - scenario.injection_array(graph)
        perturbed, _, _ = self._sweep(graph, perturbed_loads[None], base.source_voltage)
        return np.where(graph.phase_mask, base.voltages - perturbed[0], 0)

    def delta_v_oracle(
        self,
        graph: FeederGraph,
        loads: LoadSpec,
        scenario: DeterministicScenario,
        base: Optional[SolutionState] = None,
        source_voltage: Optional[NodeVoltage] = None,
    ) -> Dict[Tuple[BusId, Phase], complex]:
        """Map (bus, phase) -> oracle dV for every present phase."""
        delta = self.delta_v_array(graph, loads, scenario, base, source_voltage)
        return {
            (bus, phase): complex(delta[i, phase.index])
            for i, bus in enumerate(graph.buses)
            for phase in PHASES
            if graph.phase_mask[i, phase.index]
        }

    def _sweep(
        self,
        graph: FeederGraph,
        loads: np.ndarray,
        source_voltage: Optional[NodeVoltage],
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        settings = self.settings
        mask = graph.phase_mask
        incidence = graph.path_incidence
        edge_z = graph.edge_impedances
        v_base = graph.v_base
        vs = (source_voltage or graph.source_voltage).values

        batch = loads.shape[0]
        flat = np.where(mask, vs[None, :], 0)
        voltages = np.broadcast_to(flat, loads.shape).astype(complex)
        iterations = np.zeros(batch, dtype=int)
        mismatch = np.full(batch, np.inf)
        active = np.arange(batch)
        if batch == 0:
            return voltages, iterations, mismatch

        for iteration in range(1, settings.max_iterations + 1):
            v = voltages[active]
            s = loads[active]
            with np.errstate(divide="ignore", invalid="ignore"):
                currents = np.where(mask, np.conj(s / v), 0)
            branch = np.matmul(incidence.T, currents)
            drops = np.einsum("eij,bej->bei", edge_z, branch)
            updated = np.where(mask, vs - np.matmul(incidence, drops), 0)

            magnitude = np.abs(updated)
            if not np.all(np.isfinite(updated)) or np.any(magnitude[:, mask] < settings.v_floor * v_base):
                worst = np.nanmin(np.where(mask, magnitude, np.inf)) / v_base
                raise VoltageCollapse(
                    f"|V| fell to {worst:.3f} pu (floor {settings.v_floor} pu) at iteration {iteration}"
                )

            step = np.max(np.abs(updated - v).reshape(len(active), -1), axis=1) / v_base
            voltages[active] = updated
            iterations[active] = iteration
            mismatch[active] = step
            logger.debug(f"sweep {iteration}: max mismatch {step.max():.3e} pu over {len(active)} case(s)")

            active = active[step >= settings.tolerance]
            if active.size == 0:
                return voltages, iterations, mismatch

        raise NonConvergence(
            f"{active.size} of {batch} case(s) not converged after {settings.max_iterations} iterations "
            f"(mismatch {mismatch[active].max():.3e} pu)"
        )
