"""
Phase definitions.
Fixed ordering a < b < c is used for every matrix and vector layout.
"""

from enum import Enum
from typing import FrozenSet, Iterable

import numpy as np


class Phase(str, Enum):
    """Conductor phase of a three-phase feeder."""

    A = "a"
    B = "b"
    C = "c"

    @property
    def index(self) -> int:
        """Row/column index in 3x3 matrices and length-3 vectors."""
        return _INDEX[self]

    @classmethod
    def parse(cls, value: "str | Phase") -> "Phase":
        """Parse 'a', 'A' or a Phase member."""
        if isinstance(value, Phase):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown phase {value!r}; expected one of a, b, c") from None


_INDEX = {Phase.A: 0, Phase.B: 1, Phase.C: 2}

PHASES = (Phase.A, Phase.B, Phase.C)
ALL_PHASES: FrozenSet[Phase] = frozenset(PHASES)


def parse_phase_set(value: "str | Iterable[str | Phase]") -> FrozenSet[Phase]:
    """Parse 'abc', 'ac', ['a', 'c'] into a phase set."""
    items = list(value) if not isinstance(value, str) else list(value.replace(",", "").replace(" ", ""))
    if not items:
        raise ValueError("phase set must not be empty")
    return frozenset(Phase.parse(p) for p in items)


def format_phase_set(phases: Iterable[Phase]) -> str:
    """Render a phase set in canonical a<b<c order, e.g. 'ac'."""
    present = set(phases)
    return "".join(p.value for p in PHASES if p in present)


def phase_mask(phases: Iterable[Phase]):
    """Boolean length-3 numpy mask for a phase set."""
    present = set(phases)
    return np.array([p in present for p in PHASES], dtype=bool)
