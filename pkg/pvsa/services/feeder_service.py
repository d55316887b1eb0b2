"""
Feeder Service - Parses feeder and scenario documents into domain models.

Bundled datasets live under pvsa/data and are addressed by short name
("ieee37", "table1"); anything else is treated as a file path.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from pvsa.exceptions import IoError, PhaseMismatch, SchemaError, UnknownBusReference
from pvsa.models.network import (
    FeederGraph,
    LineSegment,
    LoadSpec,
    NodeVoltage,
    PhaseImpedanceMatrix,
    kron_reduce,
    validate,
)
from pvsa.models.phase import parse_phase_set
from pvsa.models.scenario import (
    ActorChange,
    CorrelationSpec,
    DeterministicScenario,
    Observation,
    Scenario,
    StochasticActor,
    StochasticScenario,
)
from pvsa.schemas.feeder import FeederDocument, SegmentDocument
from pvsa.schemas.scenario import DeterministicScenarioDocument, scenario_adapter
from pvsa.schemas.units import IMPEDANCE_LENGTH_METERS, LENGTH_METERS

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
FEEDER_DIR = DATA_DIR / "feeders"
SCENARIO_DIR = DATA_DIR / "scenarios"


def _load_yaml(text: str, what: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise SchemaError(f"{what} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{what} must be a mapping at the top level")
    return data


def _schema_error(e: ValidationError, what: str) -> SchemaError:
    first = e.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return SchemaError(f"{what}: {location}: {first['msg']} ({e.error_count()} error(s))")


def _read(source: Union[str, Path], bundle_dir: Path) -> Tuple[str, str]:
    """Return (text, resolved path) for a bundled name or a file path."""
    path = Path(source)
    if not path.is_file():
        bundled = bundle_dir / f"{source}.yaml"
        if bundled.is_file():
            path = bundled
        else:
            known = ", ".join(sorted(p.stem for p in bundle_dir.glob("*.yaml")))
            raise IoError(f"no such file or bundled name {str(source)!r} (bundled: {known})")
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


class FeederService:
    """Document parsing and serialisation; pure, safe for concurrent use."""

    # --- feeders -------------------------------------------------------------

    def parse_document(self, text: str) -> FeederDocument:
        data = _load_yaml(text, "feeder document")
        try:
            return FeederDocument.model_validate(data)
        except ValidationError as e:
            raise _schema_error(e, "feeder document") from e

    def parse_feeder(self, text: str) -> Tuple[FeederGraph, LoadSpec]:
        """Parse, Kron-reduce where flagged, and validate a feeder document."""
        return self.build(self.parse_document(text))

    def load_feeder(self, source: Union[str, Path]) -> Tuple[FeederGraph, LoadSpec]:
        text, path = _read(source, FEEDER_DIR)
        logger.debug(f"Reading feeder from {path}")
        return self.parse_feeder(text)

    def load_document(self, source: Union[str, Path]) -> FeederDocument:
        text, _ = _read(source, FEEDER_DIR)
        return self.parse_document(text)

    def serialize_feeder(self, document: FeederDocument) -> str:
        data = document.model_dump(mode="json", by_alias=True, exclude_none=True)
        return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=120)

    def build(self, document: FeederDocument) -> Tuple[FeederGraph, LoadSpec]:
        bus_ids = [bus.id for bus in document.buses]
        if len(set(bus_ids)) != len(bus_ids):
            raise SchemaError("duplicate bus id in feeder document")
        known = set(bus_ids)
        if document.source not in known:
            raise UnknownBusReference(f"source {document.source!r} is not a declared bus")

        segments = []
        for segment in document.segments:
            for bus in (segment.from_bus, segment.to_bus):
                if bus not in known:
                    raise UnknownBusReference(f"segment {segment.from_bus}-{segment.to_bus} references unknown bus {bus!r}")
            segments.append(LineSegment(segment.from_bus, segment.to_bus, self._segment_impedance(document, segment)))

        v_base = document.line_to_neutral_volts
        source_voltage = None
        if document.source_voltage is not None:
            magnitude = np.array(document.source_voltage.magnitude_pu) * v_base
            angle = np.deg2rad(document.source_voltage.angle_deg)
            source_voltage = NodeVoltage(magnitude * np.exp(1j * angle))

        graph = FeederGraph(
            buses={bus.id: parse_phase_set(bus.phases) for bus in document.buses},
            segments=segments,
            source=document.source,
            v_base=v_base,
            source_voltage=source_voltage,
            labels={bus.id: bus.label for bus in document.buses if bus.label},
            name=document.name,
        )

        powers: Dict[str, np.ndarray] = {}
        for load in document.loads:
            if load.bus not in known:
                raise UnknownBusReference(f"load references unknown bus {load.bus!r}")
            powers.setdefault(load.bus, np.zeros(3, dtype=complex))[load.phase.index] += complex(load.p, load.q)
        loads = LoadSpec(powers)
        if document.load_scale != 1.0:
            loads = loads.scaled(document.load_scale)
        validate(graph, loads)

        logger.info(
            f"Parsed feeder {document.name}: {graph.n_buses} buses, "
            f"{len(graph.segments)} segments, {len(powers)} loaded buses"
        )
        return graph, loads

    @staticmethod
    def _segment_impedance(document: FeederDocument, segment: SegmentDocument) -> PhaseImpedanceMatrix:
        phases = parse_phase_set(segment.phases) if segment.phases else None
        if segment.z is not None:
            return PhaseImpedanceMatrix.from_matrix(np.array(segment.z, dtype=complex), phases)

        config = document.configurations.get(segment.config)
        if config is None:
            raise SchemaError(f"segment {segment.from_bus}-{segment.to_bus} uses unknown configuration {segment.config!r}")
        if phases is None and config.phases:
            phases = parse_phase_set(config.phases)
        per_length = np.array(config.z, dtype=complex)
        scale = segment.length * LENGTH_METERS[document.units.length] / IMPEDANCE_LENGTH_METERS[document.units.impedance]
        if config.kron:
            return kron_reduce(per_length, phases).scaled(scale)
        return PhaseImpedanceMatrix.from_matrix(per_length * scale, phases)

    # --- scenarios -----------------------------------------------------------

    def parse_scenario(self, text: str, graph: Optional[FeederGraph] = None) -> Scenario:
        """Parse a scenario; with ``graph`` given, actor and observation buses are checked."""
        data = _load_yaml(text, "scenario document")
        try:
            document = scenario_adapter.validate_python(data)
        except ValidationError as e:
            raise _schema_error(e, "scenario document") from e

        observation = (
            Observation(document.observation.bus, document.observation.phase) if document.observation else None
        )
        if isinstance(document, DeterministicScenarioDocument):
            scenario: Scenario = DeterministicScenario(
                name=document.name,
                changes=tuple(ActorChange(a.bus, a.phase, a.p, a.q) for a in document.actors),
                observation=observation,
                threshold_pu=document.threshold_pu,
            )
        else:
            correlation = document.correlation
            scenario = StochasticScenario(
                name=document.name,
                actors=tuple(
                    StochasticActor(
                        bus=a.bus,
                        phases=parse_phase_set(a.phases) if a.phases else None,
                        var_p=a.var_p,
                        var_q=a.var_q,
                    )
                    for a in document.actors
                ),
                var_p=document.variance.p,
                var_q=document.variance.q,
                correlation=CorrelationSpec(correlation.pp, correlation.qq, correlation.pq, correlation.cross_phase),
                background_var_p=document.background_variance.p,
                background_var_q=document.background_variance.q,
                observation=observation,
                threshold_pu=document.threshold_pu,
            )
        if graph is not None:
            self.check_scenario(scenario, graph)
        return scenario

    def load_scenario(self, source: Union[str, Path], graph: Optional[FeederGraph] = None) -> Scenario:
        text, path = _read(source, SCENARIO_DIR)
        logger.debug(f"Reading scenario from {path}")
        return self.parse_scenario(text, graph)

    @staticmethod
    def check_scenario(scenario: Scenario, graph: FeederGraph) -> None:
        """Actors and observation must exist on the graph with the named phases."""

        def require(bus: str, what: str) -> None:
            if not graph.has_bus(bus):
                raise UnknownBusReference(f"{what} {bus!r} is not a bus of feeder {graph.name}")

        if isinstance(scenario, DeterministicScenario):
            for change in scenario.changes:
                require(change.bus, "actor")
                if change.phase not in graph.phases_of(change.bus):
                    raise PhaseMismatch(f"actor {change.bus} has no phase {change.phase.value}")
        else:
            for actor in scenario.actors:
                require(actor.bus, "actor")
                if actor.phases and not actor.phases <= graph.phases_of(actor.bus):
                    raise PhaseMismatch(f"actor {actor.bus} lacks some of the requested phases")
        if scenario.observation is not None:
            require(scenario.observation.bus, "observation bus")
