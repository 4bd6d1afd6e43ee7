"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, CapacityError -> 3,
NumericalError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration, manifest, or input file."""


class CapacityError(ValueError):
    """A requested size exceeds a hard capacity limit.

    Carries the computed maximum in ``capacity`` when known.
    """

    def __init__(self, message, capacity=None):
        super().__init__(message)
        self.capacity = capacity


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced invalid output."""


class SamplingError(ValueError):
    """A field grid is too coarse for the requested propagation."""
