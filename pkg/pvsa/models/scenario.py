"""
Scenario models.

Scenario documents state power changes as changes in *drawn* power
(New - Rated). The analytic layer works in injection convention; the
conversion happens once, in ``DeterministicScenario.perturbations``.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np

from pvsa.exceptions import InvalidCorrelation, NegativeVariance
from pvsa.models.network import BusId, FeederGraph
from pvsa.models.phase import Phase
from pvsa.models.vsa import ActorPerturbation


@dataclass(frozen=True)
class Observation:
    bus: BusId
    phase: Phase = Phase.A


@dataclass(frozen=True)
class ActorChange:
    """Change of drawn power on one phase of one bus: W and var."""

    bus: BusId
    phase: Phase
    dp: float
    dq: float = 0.0


@dataclass(frozen=True)
class DeterministicScenario:
    name: str
    changes: Tuple[ActorChange, ...] = ()
    observation: Optional[Observation] = None
    threshold_pu: Optional[float] = None

    @property
    def actors(self) -> List[BusId]:
        seen: Dict[BusId, None] = {}
        for change in self.changes:
            seen.setdefault(change.bus)
        return list(seen)

    def perturbations(self) -> List[ActorPerturbation]:
        """One injection-convention perturbation per actor bus, in first-seen order."""
        totals: Dict[BusId, np.ndarray] = {}
        for change in self.changes:
            ds = totals.setdefault(change.bus, np.zeros(3, dtype=complex))
            ds[change.phase.index] -= complex(change.dp, change.dq)
        return [ActorPerturbation(bus, ds) for bus, ds in totals.items()]

    def injection_array(self, graph: FeederGraph) -> np.ndarray:
        """(n_buses, 3) complex injection change in graph bus order."""
        array = np.zeros((graph.n_buses, 3), dtype=complex)
        for perturbation in self.perturbations():
            array[graph.bus_index(perturbation.bus)] += perturbation.ds
        return array

    def scaled(self, alpha: float) -> "DeterministicScenario":
        changes = tuple(replace(c, dp=c.dp * alpha, dq=c.dq * alpha) for c in self.changes)
        return replace(self, changes=changes)


@dataclass(frozen=True)
class CorrelationSpec:
    """Correlation coefficients between actor power changes."""

    pp: float = 0.0  # dP-dP, same phase, distinct buses
    qq: float = 0.0  # dQ-dQ, same phase, distinct buses
    pq: float = 0.0  # dP-dQ, same phase
    cross_phase: float = 0.0

    def __post_init__(self) -> None:
        for name in ("pp", "qq", "pq", "cross_phase"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise InvalidCorrelation(f"correlation {name} = {value} is outside [-1, 1]")


@dataclass(frozen=True)
class StochasticActor:
    """Actor bus with optional phase restriction and variance overrides (W^2, var^2)."""

    bus: BusId
    phases: Optional[FrozenSet[Phase]] = None
    var_p: Optional[float] = None
    var_q: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("var_p", "var_q"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise NegativeVariance(f"{name} = {value} at bus {self.bus} is negative")


@dataclass(frozen=True)
class StochasticScenario:
    name: str
    actors: Tuple[StochasticActor, ...]
    var_p: float
    var_q: float
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    background_var_p: float = 0.0
    background_var_q: float = 0.0
    observation: Optional[Observation] = None
    threshold_pu: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("var_p", "var_q", "background_var_p", "background_var_q"):
            value = getattr(self, name)
            if value < 0:
                raise NegativeVariance(f"{name} = {value} is negative")

    @property
    def actor_buses(self) -> List[BusId]:
        return [actor.bus for actor in self.actors]


Scenario = Union[DeterministicScenario, StochasticScenario]
