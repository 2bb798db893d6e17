"""
Domain exception hierarchy shared by every service.

Each service raises its own subclass so callers (the bench harness and the
CLI) can tell a degenerate instance from an optimizer failure without
parsing messages.
"""


class VqoError(Exception):
    """Base class for all errors raised by the optimization laboratory."""
    pass


# --- qubo -------------------------------------------------------------------

class InfeasibleGraphError(VqoError):
    """Raised when no simple graph satisfies the requested degree / edge count."""
    pass


class EdgeCountError(VqoError):
    """Raised when an edge count lies outside [0, n(n-1)/2]."""
    pass


class DimensionMismatchError(VqoError):
    """Raised when a bitstring, state or parameter block has the wrong size."""
    pass


class OracleCapError(VqoError):
    """Raised when exhaustive enumeration is requested above the size cap."""
    pass


class DegenerateSpectrumError(VqoError):
    """Raised when an instance has a single energy level (no first excitation)."""
    pass


# --- simulator --------------------------------------------------------------

class InvalidAnsatzError(VqoError):
    """Raised for impossible entanglement / layer combinations."""
    pass


class QubitIndexError(VqoError):
    """Raised when a gate addresses a qubit outside the register."""
    pass


class UnnormalizedStateError(VqoError):
    """Raised when sampling from a state whose norm drifted beyond tolerance."""
    pass


# --- cost -------------------------------------------------------------------

class EmptyDistributionError(VqoError):
    """Raised when a cost is requested from an empty distribution or batch."""
    pass


# --- optim ------------------------------------------------------------------

class NonFiniteCostError(VqoError):
    """Raised when the black-box cost returns NaN or infinity."""
    pass


# --- bench / cli ------------------------------------------------------------

class InstanceRunError(VqoError):
    """Wraps any failure of a single benchmark instance with its seed attached."""

    def __init__(self, instance_seed: int, cause: Exception):
        self.instance_seed = instance_seed
        self.cause = cause
        super().__init__(f"instance seed {instance_seed}: {type(cause).__name__}: {cause}")


class SpecValidationError(VqoError):
    """Raised when an experiment spec file fails schema validation."""
    pass


class ReportPresetError(VqoError):
    """Raised when a result store lacks the columns a report preset needs."""
    pass
