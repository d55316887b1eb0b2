"""Run manifest written next to every CLI output set."""

from typing import Any, Dict, List

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Everything needed to rerun a command; timings are informational only."""

    command: str
    inputs: List[str] = Field(default_factory=list)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    version: str
    outputs: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)

    def record(self, stage: str, seconds: float) -> None:
        self.timings[stage] = round(self.timings.get(stage, 0.0) + seconds, 6)
