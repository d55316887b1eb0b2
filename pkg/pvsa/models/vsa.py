"""Voltage-sensitivity types: actor perturbations, voltage changes, bound terms."""

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Tuple

import numpy as np

from pvsa.exceptions import PhaseMismatch
from pvsa.models.network import BusId
from pvsa.models.phase import ALL_PHASES, PHASES, Phase, format_phase_set, phase_mask


def _readonly(values, dtype=complex) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ActorPerturbation:
    """
    Per-phase complex power change at one actor bus, VA.

    ``ds`` is in injection convention: a load increase of dP + j dQ is
    ``-(dP + j dQ)`` here.
    """

    bus: BusId
    ds: np.ndarray

    def __post_init__(self) -> None:
        ds = np.asarray(self.ds, dtype=complex)
        if ds.shape != (3,):
            raise ValueError(f"power change at bus {self.bus} must have 3 phase entries")
        object.__setattr__(self, "ds", _readonly(ds))

    @classmethod
    def from_drawn(cls, bus: BusId, phase: Phase, dp: float, dq: float = 0.0) -> "ActorPerturbation":
        """Build from a change in drawn power on one phase."""
        ds = np.zeros(3, dtype=complex)
        ds[Phase.parse(phase).index] = -complex(dp, dq)
        return cls(bus, ds)

    def check_phases(self, present: FrozenSet[Phase]) -> None:
        stray = [p.value for p in PHASES if self.ds[p.index] != 0 and p not in present]
        if stray:
            raise PhaseMismatch(
                f"power change on phase(s) {''.join(stray)} of bus {self.bus}, "
                f"which has {format_phase_set(present)}"
            )

    def scaled(self, alpha: float) -> "ActorPerturbation":
        return ActorPerturbation(self.bus, self.ds * alpha)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.ds)


@dataclass(frozen=True, eq=False)
class VoltageChange:
    """Per-phase complex dV in volts, sign dV = V_base - V_perturbed."""

    values: np.ndarray
    v_base: float
    phases: FrozenSet[Phase] = ALL_PHASES

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex)
        if values.shape != (3,):
            raise ValueError("voltage change must have 3 phase entries")
        values[~phase_mask(self.phases)] = 0
        if not np.all(np.isfinite(values)):
            raise ValueError("voltage change is not finite")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "phases", frozenset(self.phases))

    @classmethod
    def zero(cls, v_base: float, phases: Iterable[Phase] = ALL_PHASES) -> "VoltageChange":
        return cls(np.zeros(3, dtype=complex), v_base, frozenset(phases))

    def __getitem__(self, phase: Phase) -> complex:
        return complex(self.values[Phase.parse(phase).index])

    def __add__(self, other: "VoltageChange") -> "VoltageChange":
        return VoltageChange(self.values + other.values, self.v_base, self.phases & other.phases)

    @property
    def magnitude_pu(self) -> np.ndarray:
        return np.abs(self.values) / self.v_base


@dataclass(frozen=True)
class PhasePairTerm:
    """Bound constants for one (observation phase, actor phase) pair."""

    observation_phase: Phase
    actor_phase: Phase
    k1: float  # dP*R + dQ*X, VA*ohm
    k2: float  # dP*X - dQ*R, VA*ohm
    c1: float  # (Vi / Vr)^2
    c2: float  # (Vr / Vi)^2
    real: float  # volts
    imag: float  # volts

    @property
    def kind(self) -> str:
        return "self" if self.observation_phase == self.actor_phase else "cross"


@dataclass(frozen=True, eq=False)
class ErrorBoundTerms:
    """Per-phase bounds on the real and imaginary approximation error, volts."""

    v_base: float
    bound_real: np.ndarray
    bound_imag: np.ndarray
    terms: Tuple[PhasePairTerm, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bound_real", _readonly(self.bound_real, float))
        object.__setattr__(self, "bound_imag", _readonly(self.bound_imag, float))

    @classmethod
    def zero(cls, v_base: float) -> "ErrorBoundTerms":
        return cls(v_base, np.zeros(3), np.zeros(3))

    def __add__(self, other: "ErrorBoundTerms") -> "ErrorBoundTerms":
        return ErrorBoundTerms(
            self.v_base,
            self.bound_real + other.bound_real,
            self.bound_imag + other.bound_imag,
            self.terms + other.terms,
        )

    @property
    def bound_mag(self) -> np.ndarray:
        return np.hypot(self.bound_real, self.bound_imag)

    @property
    def bound_mag_pu(self) -> np.ndarray:
        return self.bound_mag / self.v_base


@dataclass(frozen=True, eq=False)
class ActorCoefficients:
    """
    Per-actor conj(dS) / conj(V) at the operating point, merged by bus.

    ``rows`` are bus indices into the feeder; ``values`` has one length-3
    row per actor. dV at bus o is -sum_a Z[o, a] @ values[a].
    """

    rows: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=int).reshape(-1)
        values = np.array(self.values, dtype=complex).reshape(-1, 3)
        if len(rows) != len(values):
            raise ValueError(f"{len(rows)} actor rows but {len(values)} coefficient rows")
        rows.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.rows)
