"""Load-flow settings and solution types."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from pvsa.config import Settings, settings as default_settings
from pvsa.models.network import BusId, FeederGraph, NodeVoltage
from pvsa.models.phase import Phase


@dataclass(frozen=True)
class SolveSettings:
    """Fixed-point solver controls. Tolerance and floor are in pu of v_base."""

    tolerance: float = 1e-9
    max_iterations: int = 100
    v_floor: float = 0.3

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 <= self.v_floor < 1:
            raise ValueError(f"v_floor must lie in [0, 1), got {self.v_floor}")

    @classmethod
    def from_settings(cls, config: Optional[Settings] = None, **overrides) -> "SolveSettings":
        config = config or default_settings
        values = {
            "tolerance": config.solver_tolerance,
            "max_iterations": config.solver_max_iterations,
            "v_floor": config.solver_v_floor,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class SolutionState:
    """Converged bus voltages of one load case."""

    graph: FeederGraph
    voltages: np.ndarray  # (n_buses, 3) complex volts, zero on absent phases
    iterations: int
    mismatch: float  # final max |dV| between iterates, pu
    source_voltage: Optional[NodeVoltage] = None

    def __post_init__(self) -> None:
        voltages = np.array(self.voltages, dtype=complex)
        voltages.setflags(write=False)
        object.__setattr__(self, "voltages", voltages)

    def voltage(self, bus: BusId) -> NodeVoltage:
        return NodeVoltage(self.voltages[self.graph.bus_index(bus)], self.graph.phases_of(bus))

    def voltage_at(self, bus: BusId, phase: Phase) -> Optional[complex]:
        return self.voltage(bus)[phase]

    @property
    def magnitude_pu(self) -> np.ndarray:
        """(n_buses, 3) |V| / v_base, NaN on absent phases."""
        return np.where(self.graph.phase_mask, np.abs(self.voltages) / self.graph.v_base, np.nan)
