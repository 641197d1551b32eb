"""Exception types shared across the package."""


class IvcateError(Exception):
    """Base class for domain errors raised by this package."""


class PositivityError(IvcateError):
    """A treatment or instrument arm required for estimation is empty."""


class DegenerateInstrumentError(IvcateError):
    """The instrument is constant and no known propensity was supplied."""


class RankDeficiencyError(IvcateError):
    """The (weighted) design matrix is numerically rank deficient.

    Callers can usually recover by retrying with a small ridge penalty.
    """


class TrainingDivergedError(IvcateError):
    """Network training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class LoadError(IvcateError):
    """An input file is missing, unparsable, or violates its schema."""


class StudyError(IvcateError):
    """Too many Monte Carlo replicates failed for the study to be trusted."""
