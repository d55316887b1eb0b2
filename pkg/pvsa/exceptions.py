"""
Error hierarchy.

Every error carries a category and the CLI exit code for that category, so
the front end can report one machine-parseable line per failure.
"""


class PvsaError(Exception):
    """Base class for all package errors."""

    category = "unexpected"
    exit_code = 1


# --- Input errors (bad documents, bad graphs, bad parameters) ---------------


class InputError(PvsaError):
    category = "input"
    exit_code = 3


class UnknownBus(InputError):
    pass


class ZeroNeutralSelfImpedance(InputError):
    pass


class PhaseMismatch(InputError):
    pass


class NonRadial(InputError):
    pass


class CycleDetected(NonRadial):
    pass


class Disconnected(NonRadial):
    pass


class SchemaError(InputError):
    pass


class UnknownBusReference(InputError):
    pass


class InvalidCorrelation(InputError):
    pass


class NegativeVariance(InputError):
    pass


class NotPositiveSemidefinite(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class BinningMismatch(InputError):
    pass


class InvalidShape(InputError):
    pass


# --- Compute errors (numerics failed on valid input) ------------------------


class ComputeError(PvsaError):
    category = "compute"
    exit_code = 4


class NonConvergence(ComputeError):
    pass


class VoltageCollapse(ComputeError):
    pass


class ZeroActorVoltage(ComputeError):
    pass


class DegenerateDistribution(ComputeError):
    pass


# --- Front end --------------------------------------------------------------


class UsageError(PvsaError):
    category = "usage"
    exit_code = 2


class IoError(PvsaError):
    category = "io"
    exit_code = 5
