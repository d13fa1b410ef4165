"""Exception types shared by all simulator modules."""


class PipsimError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(PipsimError):
    """Configuration rejected; carries the complete list of violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))


class InputError(PipsimError):
    """Missing or malformed input file (scene, weights, manifest)."""


class DimensionMismatch(PipsimError):
    """Array geometry does not match the configured sensor."""


class UnsupportedGeometry(PipsimError):
    """Kernel size, stride, or policy outside the supported set."""


class InfeasibleTiming(PipsimError):
    """Pipelined reset/expose cannot fit in the available readout window."""


class PhaseMismatch(PipsimError):
    """Readouts being subtracted do not come from the same tile."""


class NotReady(PipsimError):
    """Readout requested from a tile that is not in the ready state."""
