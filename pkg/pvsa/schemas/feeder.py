"""Feeder document schema (YAML, schema_version 1). See docs/FEEDER_FORMAT.md."""

import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pvsa.models.phase import Phase, format_phase_set, parse_phase_set
from pvsa.schemas.units import ComplexValue, Power

Matrix = List[List[ComplexValue]]


def _check_phases(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    return format_phase_set(parse_phase_set(value))


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True, populate_by_name=True)


class UnitsDocument(_Document):
    length: Literal["ft", "mi", "m", "km"] = "ft"
    impedance: Literal["ohm_per_mile", "ohm_per_km"] = "ohm_per_mile"


class ConfigurationDocument(_Document):
    """Per-unit-length phase impedance; 4x4 matrices need ``kron: true``."""

    z: Matrix
    kron: bool = False
    phases: Optional[str] = None

    normalize_phases = field_validator("phases")(_check_phases)

    @model_validator(mode="after")
    def check_shape(self) -> "ConfigurationDocument":
        size = len(self.z)
        if any(len(row) != size for row in self.z):
            raise ValueError("impedance matrix must be square")
        expected = 4 if self.kron else 3
        if size != expected:
            raise ValueError(f"kron={self.kron} needs a {expected}x{expected} matrix, got {size}x{size}")
        return self


class BusDocument(_Document):
    id: str
    phases: str = "abc"
    label: Optional[str] = None

    normalize_phases = field_validator("phases")(_check_phases)


class SegmentDocument(_Document):
    """Either ``config`` + ``length`` or an inline total impedance ``z`` (3x3, ohm)."""

    from_bus: str = Field(alias="from")
    to_bus: str = Field(alias="to")
    length: Optional[float] = None
    config: Optional[str] = None
    z: Optional[Matrix] = None
    phases: Optional[str] = None

    normalize_phases = field_validator("phases")(_check_phases)

    @model_validator(mode="after")
    def check_impedance_source(self) -> "SegmentDocument":
        if (self.config is None) == (self.z is None):
            raise ValueError(f"segment {self.from_bus}-{self.to_bus}: give exactly one of config or z")
        if self.config is not None and (self.length is None or not self.length > 0):
            raise ValueError(f"segment {self.from_bus}-{self.to_bus}: length must be > 0")
        if self.z is not None and (len(self.z) != 3 or any(len(row) != 3 for row in self.z)):
            raise ValueError(f"segment {self.from_bus}-{self.to_bus}: inline z must be 3x3 ohm")
        return self


class LoadDocument(_Document):
    bus: str
    phase: Phase
    p: Power = 0.0
    q: Power = 0.0

    @field_validator("phase", mode="before")
    @classmethod
    def parse_phase(cls, value):
        return Phase.parse(value)


class SourceVoltageDocument(_Document):
    magnitude_pu: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0])
    angle_deg: List[float] = Field(default_factory=lambda: [0.0, -120.0, 120.0])

    @model_validator(mode="after")
    def check_lengths(self) -> "SourceVoltageDocument":
        if len(self.magnitude_pu) != 3 or len(self.angle_deg) != 3:
            raise ValueError("source_voltage needs three magnitudes and three angles")
        if any(not m > 0 for m in self.magnitude_pu):
            raise ValueError("source voltage magnitudes must be > 0")
        return self


class FeederDocument(_Document):
    schema_version: Literal[1] = 1
    name: str
    source: str
    v_base: Optional[float] = None
    kv_ll: Optional[float] = None
    source_voltage: Optional[SourceVoltageDocument] = None
    units: UnitsDocument = Field(default_factory=UnitsDocument)
    configurations: Dict[str, ConfigurationDocument] = Field(default_factory=dict)
    buses: List[BusDocument]
    segments: List[SegmentDocument]
    loads: List[LoadDocument] = Field(default_factory=list)
    load_scale: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_base_voltage(self) -> "FeederDocument":
        if (self.v_base is None) == (self.kv_ll is None):
            raise ValueError("give exactly one of v_base (line-to-neutral volts) or kv_ll")
        if not self.line_to_neutral_volts > 0:
            raise ValueError("base voltage must be > 0")
        return self

    @property
    def line_to_neutral_volts(self) -> float:
        if self.v_base is not None:
            return self.v_base
        return self.kv_ll * 1000.0 / math.sqrt(3.0)
