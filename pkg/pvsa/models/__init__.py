"""Domain models."""

from pvsa.models.phase import Phase, PHASES, ALL_PHASES
from pvsa.models.network import (
    FeederGraph,
    LineSegment,
    LoadSpec,
    NodeVoltage,
    PhaseImpedanceMatrix,
    kron_reduce,
    validate,
)
from pvsa.models.loadflow import SolveSettings, SolutionState
from pvsa.models.vsa import ActorPerturbation, ErrorBoundTerms, VoltageChange
from pvsa.models.scenario import (
    ActorChange,
    CorrelationSpec,
    DeterministicScenario,
    Observation,
    Scenario,
    StochasticActor,
    StochasticScenario,
)
from pvsa.models.distribution import (
    DiscretizedPdf,
    EmpiricalHistogram,
    GammaParams,
    GaussianMoments,
    NakagamiParams,
    PowerChangeCovariance,
    SensitivityVectors,
)
from pvsa.models.manifest import RunManifest

__all__ = [
    "Phase",
    "PHASES",
    "ALL_PHASES",
    "FeederGraph",
    "LineSegment",
    "LoadSpec",
    "NodeVoltage",
    "PhaseImpedanceMatrix",
    "kron_reduce",
    "validate",
    "SolveSettings",
    "SolutionState",
    "ActorPerturbation",
    "ErrorBoundTerms",
    "VoltageChange",
    "ActorChange",
    "CorrelationSpec",
    "DeterministicScenario",
    "Observation",
    "Scenario",
    "StochasticActor",
    "StochasticScenario",
    "DiscretizedPdf",
    "EmpiricalHistogram",
    "GammaParams",
    "GaussianMoments",
    "NakagamiParams",
    "PowerChangeCovariance",
    "SensitivityVectors",
    "RunManifest",
]
