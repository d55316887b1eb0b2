"""
Quantity parsing for feeder and scenario documents.

Documents may write powers as "140kW", "-21 kvar" or plain numbers
(watts / vars); variances as "50 kW^2". Internally everything is SI.
"""

import re
from typing import Annotated, Any

from pydantic import BeforeValidator, PlainSerializer

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6}
_POWER = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*([kM]?)(W|var|VA)?\s*(\^2|²)?\s*$")

LENGTH_METERS = {"ft": 0.3048, "mi": 1609.344, "m": 1.0, "km": 1000.0}
IMPEDANCE_LENGTH_METERS = {"ohm_per_mile": 1609.344, "ohm_per_km": 1000.0}


def _parse_quantity(value: Any, squared: bool) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number or a quantity string")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number or a quantity string, got {type(value).__name__}")
    match = _POWER.match(value)
    if not match:
        raise ValueError(f"cannot parse quantity {value!r}")
    number, prefix, unit, power = match.groups()
    if prefix and not unit:
        raise ValueError(f"unit prefix without unit in {value!r}")
    if unit and bool(power) != squared:
        raise ValueError(f"{value!r}: expected {'a squared' if squared else 'an unsquared'} unit")
    scale = _PREFIX[prefix] ** (2 if squared else 1)
    return float(number) * scale


def parse_power(value: Any) -> float:
    """'140kW' -> 140000.0; plain numbers are watts/vars."""
    return _parse_quantity(value, squared=False)


def parse_variance(value: Any) -> float:
    """'50 kW^2' -> 5e7; plain numbers are W^2/var^2."""
    return _parse_quantity(value, squared=True)


def parse_complex(value: Any) -> complex:
    """Accept 0.29+0.19j, '0.29+0.19i', numbers, or [re, im] pairs."""
    if isinstance(value, complex):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ValueError(f"cannot parse complex value {value!r}")


def format_complex(value: complex) -> str:
    sign = "-" if value.imag < 0 else "+"
    return f"{value.real!r}{sign}{abs(value.imag)!r}j"


Power = Annotated[float, BeforeValidator(parse_power)]
Variance = Annotated[float, BeforeValidator(parse_variance)]
ComplexValue = Annotated[complex, BeforeValidator(parse_complex), PlainSerializer(format_complex, return_type=str)]
