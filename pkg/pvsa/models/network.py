"""
Radial three-phase feeder model.

Absent phases are carried as explicit masks plus zero matrix rows/columns,
so every formula stays in fixed 3x3 / length-3 form. Segment impedances are
stored post-Kron in total ohms for the segment length.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from pvsa.config import settings
from pvsa.exceptions import (
    CycleDetected,
    Disconnected,
    PhaseMismatch,
    SchemaError,
    UnknownBus,
    ZeroNeutralSelfImpedance,
)
from pvsa.models.phase import ALL_PHASES, PHASES, Phase, format_phase_set, phase_mask

logger = logging.getLogger(__name__)

BusId = str


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PhaseImpedanceMatrix:
    """3x3 complex impedance in ohms, rows/columns ordered (a, b, c)."""

    values: np.ndarray
    phases: FrozenSet[Phase] = ALL_PHASES

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (3, 3):
            raise ValueError(f"impedance matrix must be 3x3, got {values.shape}")
        absent = ~phase_mask(self.phases)
        if np.any(values[absent, :] != 0) or np.any(values[:, absent] != 0):
            raise PhaseMismatch(
                f"impedance has nonzero entries on absent phases (mask {format_phase_set(self.phases)!r})"
            )
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "phases", frozenset(self.phases))

    @classmethod
    def zeros(cls) -> "PhaseImpedanceMatrix":
        return cls(np.zeros((3, 3), dtype=complex), frozenset())

    @classmethod
    def from_matrix(
        cls, values: np.ndarray, phases: Optional[Iterable[Phase]] = None
    ) -> "PhaseImpedanceMatrix":
        """Build from a 3x3 array, masking rows/columns outside ``phases``.

        When ``phases`` is omitted the mask is the set of phases with a
        nonzero self impedance.
        """
        values = np.array(values, dtype=complex)
        if phases is None:
            present = frozenset(p for p in PHASES if values[p.index, p.index] != 0)
        else:
            present = frozenset(phases)
        absent = ~phase_mask(present)
        values[absent, :] = 0
        values[:, absent] = 0
        return cls(values, present)

    def __getitem__(self, key: Tuple[Phase, Phase]) -> complex:
        p, q = key
        return complex(self.values[Phase.parse(p).index, Phase.parse(q).index])

    def __add__(self, other: "PhaseImpedanceMatrix") -> "PhaseImpedanceMatrix":
        return PhaseImpedanceMatrix(self.values + other.values, self.phases | other.phases)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhaseImpedanceMatrix):
            return NotImplemented
        return self.phases == other.phases and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.phases, self.values.tobytes()))

    def scaled(self, factor: float) -> "PhaseImpedanceMatrix":
        return PhaseImpedanceMatrix(self.values * factor, self.phases)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, self.values.T))


def kron_reduce(
    z4: np.ndarray,
    phases: Optional[Iterable[Phase]] = None,
    floor: Optional[float] = None,
) -> PhaseImpedanceMatrix:
    """Eliminate the neutral (4th row/column) of a 4x4 impedance matrix.

    Z'_ij = Z_ij - Z_in * Z_nj / Z_nn for i, j in {a, b, c}.
    """
    z4 = np.asarray(z4, dtype=complex)
    if z4.shape != (4, 4):
        raise ValueError(f"Kron reduction needs a 4x4 matrix, got {z4.shape}")
    floor = settings.kron_neutral_floor if floor is None else floor
    z_nn = z4[3, 3]
    if abs(z_nn) < floor:
        raise ZeroNeutralSelfImpedance(f"|Z_nn| = {abs(z_nn):.3e} ohm is below {floor:.0e}")
    reduced = z4[:3, :3] - np.outer(z4[:3, 3], z4[3, :3]) / z_nn
    return PhaseImpedanceMatrix.from_matrix(reduced, phases)


@dataclass(frozen=True, eq=False)
class LineSegment:
    """One feeder edge; impedance already Kron-reduced, total ohms."""

    from_bus: BusId
    to_bus: BusId
    impedance: PhaseImpedanceMatrix

    def reversed(self) -> "LineSegment":
        return LineSegment(self.to_bus, self.from_bus, self.impedance)

    def __repr__(self) -> str:
        return f"<LineSegment {self.from_bus}->{self.to_bus} ({format_phase_set(self.impedance.phases)})>"


@dataclass(frozen=True, eq=False)
class NodeVoltage:
    """Per-phase complex voltage at a bus, volts. Absent phases carry no value."""

    values: np.ndarray
    phases: FrozenSet[Phase] = ALL_PHASES

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex)
        if values.shape != (3,):
            raise ValueError(f"node voltage must have 3 entries, got {values.shape}")
        values[~phase_mask(self.phases)] = 0
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "phases", frozenset(self.phases))

    @classmethod
    def balanced(cls, magnitude: float, angle_a_deg: float = 0.0) -> "NodeVoltage":
        """Balanced positive-sequence set a, b = a - 120 deg, c = a + 120 deg."""
        angles = np.deg2rad(angle_a_deg + np.array([0.0, -120.0, 120.0]))
        return cls(magnitude * np.exp(1j * angles))

    def __getitem__(self, phase: Phase) -> Optional[complex]:
        phase = Phase.parse(phase)
        if phase not in self.phases:
            return None
        return complex(self.values[phase.index])

    @property
    def magnitude(self) -> np.ndarray:
        """|V| in volts; NaN on absent phases."""
        return np.where(phase_mask(self.phases), np.abs(self.values), np.nan)

    @property
    def angle(self) -> np.ndarray:
        """Angle in radians; NaN on absent phases."""
        return np.where(phase_mask(self.phases), np.angle(self.values), np.nan)


@dataclass(frozen=True)
class LoadSpec:
    """Constant-power wye loads: bus -> per-phase complex power drawn, VA."""

    powers: Mapping[BusId, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen = {}
        for bus, value in self.powers.items():
            value = np.asarray(value, dtype=complex)
            if value.shape != (3,):
                raise ValueError(f"load at bus {bus} must have 3 phase entries")
            frozen[str(bus)] = _frozen(value)
        object.__setattr__(self, "powers", frozen)

    @classmethod
    def empty(cls) -> "LoadSpec":
        return cls({})

    def at(self, bus: BusId) -> np.ndarray:
        return self.powers.get(bus, np.zeros(3, dtype=complex))

    def as_array(self, graph: "FeederGraph") -> np.ndarray:
        """(n_buses, 3) complex array in the graph's bus order."""
        array = np.zeros((graph.n_buses, 3), dtype=complex)
        for bus, value in self.powers.items():
            array[graph.bus_index(bus)] = value
        return array

    def scaled(self, factor: float) -> "LoadSpec":
        return LoadSpec({bus: value * factor for bus, value in self.powers.items()})

    @property
    def total(self) -> np.ndarray:
        if not self.powers:
            return np.zeros(3, dtype=complex)
        return np.sum(list(self.powers.values()), axis=0)


def _orient(
    buses: Mapping[BusId, FrozenSet[Phase]],
    segments: Sequence[LineSegment],
    source: BusId,
) -> Tuple[List[LineSegment], Dict[BusId, BusId]]:
    """Check radiality and orient every segment away from the source.

    Returns the oriented segments in breadth-first order and the parent map.
    """
    multigraph = nx.MultiGraph()
    multigraph.add_nodes_from(buses)
    for segment in segments:
        for bus in (segment.from_bus, segment.to_bus):
            if bus not in buses:
                raise UnknownBus(f"segment {segment.from_bus}-{segment.to_bus} references unknown bus {bus!r}")
        if segment.from_bus == segment.to_bus:
            raise CycleDetected(f"segment {segment.from_bus}-{segment.to_bus} is a self loop")
        multigraph.add_edge(segment.from_bus, segment.to_bus, segment=segment)

    simple = nx.Graph(multigraph)
    if simple.number_of_edges() != multigraph.number_of_edges():
        raise CycleDetected("duplicated segment between the same pair of buses")
    if not nx.is_connected(simple):
        unreachable = sorted(set(buses) - nx.node_connected_component(simple, source))
        raise Disconnected(f"buses not reachable from source {source}: {unreachable[:10]}")
    if not nx.is_tree(simple):
        raise CycleDetected(
            f"{simple.number_of_edges()} segments for {simple.number_of_nodes()} buses; network is meshed"
        )

    parents: Dict[BusId, BusId] = {}
    oriented: List[LineSegment] = []
    for upstream, downstream in nx.bfs_edges(simple, source):
        segment = simple.edges[upstream, downstream]["segment"]
        if segment.from_bus != upstream:
            segment = segment.reversed()
        parents[downstream] = upstream
        oriented.append(segment)
    return oriented, parents


def validate(graph: "FeederGraph", loads: Optional[LoadSpec] = None) -> None:
    """Confirm radiality, connectivity and phase consistency.

    Raises CycleDetected, Disconnected, PhaseMismatch or UnknownBus.
    """
    _check(graph.bus_phases, graph.raw_segments, graph.source, graph.v_base, graph.source_voltage, loads)


def _check(
    buses: Mapping[BusId, FrozenSet[Phase]],
    segments: Sequence[LineSegment],
    source: BusId,
    v_base: float,
    source_voltage: NodeVoltage,
    loads: Optional[LoadSpec],
) -> Tuple[List[LineSegment], Dict[BusId, BusId]]:
    if source not in buses:
        raise UnknownBus(f"source bus {source!r} is not defined")
    if buses[source] != ALL_PHASES:
        raise PhaseMismatch(f"source bus {source} must carry phases abc, has {format_phase_set(buses[source])}")
    if not v_base > 0:
        raise SchemaError(f"v_base must be > 0, got {v_base}")
    if source_voltage.phases != ALL_PHASES or np.any(np.abs(source_voltage.values) == 0):
        raise PhaseMismatch("source voltage must be nonzero on all three phases")

    oriented, _parents = result = _orient(buses, segments, source)

    for segment in oriented:
        mask = segment.impedance.phases
        if not mask <= buses[segment.from_bus]:
            raise PhaseMismatch(
                f"segment {segment.from_bus}->{segment.to_bus} carries phases {format_phase_set(mask)} "
                f"not present at {segment.from_bus} ({format_phase_set(buses[segment.from_bus])})"
            )
        if not buses[segment.to_bus] <= mask:
            raise PhaseMismatch(
                f"bus {segment.to_bus} declares phases {format_phase_set(buses[segment.to_bus])} "
                f"but is fed by {format_phase_set(mask)}"
            )

    if loads is not None:
        for bus, power in loads.powers.items():
            if bus not in buses:
                raise UnknownBus(f"load references unknown bus {bus!r}")
            stray = [p.value for p in PHASES if power[p.index] != 0 and p not in buses[bus]]
            if stray:
                raise PhaseMismatch(f"load on phase(s) {''.join(stray)} of bus {bus}, which has {format_phase_set(buses[bus])}")
    return result


class FeederGraph:
    """
    Immutable radial feeder.

    Built once and validated on construction; afterwards every query is
    pure. The shared-path memo is filled under a lock, so concurrent
    readers see idempotent fills.
    """

    def __init__(
        self,
        buses: Mapping[BusId, Iterable[Phase]],
        segments: Sequence[LineSegment],
        source: BusId,
        v_base: float,
        source_voltage: Optional[NodeVoltage] = None,
        labels: Optional[Mapping[BusId, str]] = None,
        name: str = "feeder",
    ):
        self.name = name
        self.bus_phases: Dict[BusId, FrozenSet[Phase]] = {str(b): frozenset(p) for b, p in buses.items()}
        self.raw_segments: Tuple[LineSegment, ...] = tuple(segments)
        self.source: BusId = str(source)
        self.v_base = float(v_base)
        self.source_voltage = source_voltage or NodeVoltage.balanced(self.v_base)
        self.labels: Dict[BusId, str] = dict(labels or {})

        oriented, parents = _check(
            self.bus_phases, self.raw_segments, self.source, self.v_base, self.source_voltage, None
        )
        self._segments: Tuple[LineSegment, ...] = tuple(oriented)
        self._parents = parents
        self._buses: Tuple[BusId, ...] = tuple(self.bus_phases)
        self._index = {bus: i for i, bus in enumerate(self._buses)}
        self._incoming = {segment.to_bus: segment for segment in self._segments}
        self._edge_index = {id(segment): e for e, segment in enumerate(self._segments)}

        self._paths: Dict[BusId, Tuple[LineSegment, ...]] = {self.source: ()}
        for segment in self._segments:
            self._paths[segment.to_bus] = self._paths[segment.from_bus] + (segment,)

        self._lock = threading.Lock()
        self._pair_cache: Dict[Tuple[BusId, BusId], PhaseImpedanceMatrix] = {}
        self._shared_tensor: Optional[np.ndarray] = None

        incidence = np.zeros((len(self._buses), len(self._segments)))
        for bus, path in self._paths.items():
            for segment in path:
                incidence[self._index[bus], self._edge_index[id(segment)]] = 1.0
        self._incidence = _frozen(incidence)
        self._edge_z = _frozen(
            np.array([s.impedance.values for s in self._segments], dtype=complex).reshape(-1, 3, 3)
        )
        self._mask = _frozen(np.array([phase_mask(self.bus_phases[b]) for b in self._buses], dtype=bool))

        logger.debug(f"Feeder {name}: {len(self._buses)} buses, {len(self._segments)} segments")

    def __repr__(self) -> str:
        return f"<FeederGraph {self.name} ({self.n_buses} buses, source {self.source})>"

    # --- buses -----------------------------------------------------------

    @property
    def buses(self) -> Tuple[BusId, ...]:
        return self._buses

    @property
    def n_buses(self) -> int:
        return len(self._buses)

    @property
    def segments(self) -> Tuple[LineSegment, ...]:
        """Segments oriented away from the source, breadth-first."""
        return self._segments

    @property
    def phase_mask(self) -> np.ndarray:
        """(n_buses, 3) bool array of present phases."""
        return self._mask

    def has_bus(self, bus: BusId) -> bool:
        return bus in self._index

    def bus_index(self, bus: BusId) -> int:
        try:
            return self._index[bus]
        except KeyError:
            raise UnknownBus(f"bus {bus!r} is not part of feeder {self.name}") from None

    def phases_of(self, bus: BusId) -> FrozenSet[Phase]:
        self.bus_index(bus)
        return self.bus_phases[bus]

    def parent(self, bus: BusId) -> Optional[BusId]:
        self.bus_index(bus)
        return self._parents.get(bus)

    def label(self, bus: BusId) -> str:
        return self.labels.get(bus, bus)

    # --- paths -----------------------------------------------------------

    def path_edges(self, bus: BusId) -> List[LineSegment]:
        """Unique source->bus edge sequence; empty for the source."""
        self.bus_index(bus)
        return list(self._paths[bus])

    def is_downstream(self, bus: BusId, ancestor: BusId) -> bool:
        """True when ``ancestor`` lies on the source->bus path (or equals bus)."""
        self.bus_index(bus)
        self.bus_index(ancestor)
        if ancestor in (bus, self.source):
            return True
        return any(segment.to_bus == ancestor for segment in self._paths[bus])

    def shared_path_impedance(self, observation: BusId, actor: BusId) -> PhaseImpedanceMatrix:
        """Z_OA: sum of segment impedances over path(O) ∩ path(A)."""
        self.bus_index(observation)
        self.bus_index(actor)
        key = (observation, actor) if observation <= actor else (actor, observation)
        cached = self._pair_cache.get(key)
        if cached is not None:
            return cached

        total = PhaseImpedanceMatrix.zeros()
        for left, right in zip(self._paths[observation], self._paths[actor]):
            if left is not right:
                break
            total = total + left.impedance

        with self._lock:
            return self._pair_cache.setdefault(key, total)

    def shared_path_tensor(self) -> np.ndarray:
        """(n, n, 3, 3) complex array with Z_OA for every bus pair."""
        if self._shared_tensor is None:
            with self._lock:
                if self._shared_tensor is None:
                    tensor = np.einsum(
                        "oe,ae,eij->oaij", self._incidence, self._incidence, self._edge_z, optimize=True
                    )
                    self._shared_tensor = _frozen(tensor)
        return self._shared_tensor

    # --- arrays for vectorised sweeps ---------------------------------------

    @property
    def path_incidence(self) -> np.ndarray:
        """(n_buses, n_segments) 0/1 matrix: segment e lies on the path to bus n."""
        return self._incidence

    @property
    def edge_impedances(self) -> np.ndarray:
        """(n_segments, 3, 3) complex impedances in segment order."""
        return self._edge_z
