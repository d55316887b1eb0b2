"""Pydantic document schemas for feeder and scenario files."""

from pvsa.schemas.feeder import FeederDocument
from pvsa.schemas.scenario import (
    DeterministicScenarioDocument,
    ScenarioDocument,
    StochasticScenarioDocument,
    scenario_adapter,
)

__all__ = [
    "FeederDocument",
    "DeterministicScenarioDocument",
    "ScenarioDocument",
    "StochasticScenarioDocument",
    "scenario_adapter",
]
