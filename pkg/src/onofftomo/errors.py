"""Exception types shared across the toolkit."""


class ReconstructionError(Exception):
    """Base class for numerical failures (truncation, conditioning, convergence)."""


class TruncationError(ReconstructionError):
    """Fock-space truncation too small for the requested operation."""


class IllConditionedError(ReconstructionError):
    """A linear inversion or iterative update entered a numerically hopeless regime."""


class RankDeficiencyError(IllConditionedError):
    """Kernel rank below the requested number of recoverable elements.

    ``largest_safe_m`` is the largest matrix-element index m that the retained
    singular values can still support (-1 if none).
    """

    def __init__(self, message: str, largest_safe_m: int = -1):
        super().__init__(message)
        self.largest_safe_m = largest_safe_m


class BootstrapError(ReconstructionError):
    """Too many bootstrap replicas failed to reconstruct."""


class AliasingError(ValueError):
    """Phase grid too coarse for the requested modulation harmonic."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown fields, out-of-range values)."""
