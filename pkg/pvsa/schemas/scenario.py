"""Scenario document schema (YAML, schema_version 1)."""

from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator

from pvsa.models.phase import Phase, format_phase_set, parse_phase_set
from pvsa.schemas.units import Power, Variance


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True)


class ObservationDocument(_Document):
    bus: str
    phase: Phase = Phase.A

    @field_validator("phase", mode="before")
    @classmethod
    def parse_phase(cls, value):
        return Phase.parse(value)


class ActorChangeDocument(_Document):
    """Change of drawn power (New - Rated) on one phase."""

    bus: str
    phase: Phase
    p: Power = 0.0
    q: Power = 0.0

    @field_validator("phase", mode="before")
    @classmethod
    def parse_phase(cls, value):
        return Phase.parse(value)


class VariancePairDocument(_Document):
    p: Variance = 0.0
    q: Variance = 0.0


class CorrelationDocument(_Document):
    pp: float = 0.0
    qq: float = 0.0
    pq: float = 0.0
    cross_phase: float = 0.0


class StochasticActorDocument(_Document):
    bus: str
    phases: Optional[str] = None
    var_p: Optional[Variance] = None
    var_q: Optional[Variance] = None

    @field_validator("phases")
    @classmethod
    def normalize_phases(cls, value: Optional[str]) -> Optional[str]:
        return None if value is None else format_phase_set(parse_phase_set(value))


class DeterministicScenarioDocument(_Document):
    schema_version: Literal[1] = 1
    kind: Literal["deterministic"]
    name: str
    feeder: Optional[str] = None
    actors: List[ActorChangeDocument] = Field(default_factory=list)
    observation: Optional[ObservationDocument] = None
    threshold_pu: Optional[float] = None


class StochasticScenarioDocument(_Document):
    schema_version: Literal[1] = 1
    kind: Literal["stochastic"]
    name: str
    feeder: Optional[str] = None
    actors: List[StochasticActorDocument] = Field(default_factory=list)
    variance: VariancePairDocument = Field(default_factory=VariancePairDocument)
    background_variance: VariancePairDocument = Field(default_factory=VariancePairDocument)
    correlation: CorrelationDocument = Field(default_factory=CorrelationDocument)
    observation: Optional[ObservationDocument] = None
    threshold_pu: Optional[float] = None

    @field_validator("actors", mode="before")
    @classmethod
    def expand_bare_ids(cls, value):
        if isinstance(value, list):
            return [{"bus": item} if isinstance(item, (str, int)) else item for item in value]
        return value


ScenarioDocument = Annotated[
    Union[DeterministicScenarioDocument, StochasticScenarioDocument],
    Field(discriminator="kind"),
]

scenario_adapter: TypeAdapter = TypeAdapter(ScenarioDocument)
