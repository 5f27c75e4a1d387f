"""Exception hierarchy shared by every praf module."""


class PrafError(Exception):
    """Base class for all errors raised by praf."""


class DimensionError(PrafError, ValueError):
    """Operand shapes are incompatible."""


class DegenerateVectorError(PrafError, ValueError):
    """A cosine similarity was requested for a (near) zero-norm vector."""


class ContractError(PrafError, ValueError):
    """A call violated an operation's precondition."""


class ConfigError(PrafError, ValueError):
    """Invalid configuration value or combination of values."""


class ImageIOError(PrafError, OSError):
    """An image could not be read or written."""


class ScoringError(PrafError):
    """The judge reply could not be turned into a score."""


class AttackError(PrafError):
    """An attack run aborted; carries the iteration and stage it failed in."""

    def __init__(self, message, iteration=None, stage=None):
        super().__init__(f"{message} (iteration={iteration}, stage={stage})")
        self.iteration = iteration
        self.stage = stage
