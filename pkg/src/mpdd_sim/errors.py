"""Exception types shared across the simulator.

Exit-code mapping used by the CLI: configuration problems exit with 2,
numerical failures with 3.
"""


class MpddSimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(MpddSimError):
    """A spec, dimension, or config-file invariant is violated."""


class GeometryError(ConfigurationError):
    """Physically impossible layout (e.g. coincident meta-atoms)."""


class NumericalFailure(MpddSimError):
    """A numerical routine diverged or hit a singular system."""


def require(condition: bool, message: str) -> None:
    """Raise ConfigurationError with `message` unless `condition` holds."""
    if not condition:
        raise ConfigurationError(message)
