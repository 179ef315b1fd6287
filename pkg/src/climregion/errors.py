"""Exception hierarchy.

``InputError`` subclasses describe bad input files or arguments (CLI exit
code 2); ``ComputationError`` subclasses describe failures while fitting or
evaluating (CLI exit code 3).
"""


class ClimRegionError(Exception):
    """Base class for every error raised by this package."""


class InputError(ClimRegionError):
    pass


class ComputationError(ClimRegionError):
    pass


# --- ingestion -------------------------------------------------------------

class IngestError(InputError):
    """Ingestion failure; ``line`` is the 1-based source line when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BadHeader(IngestError):
    pass


class MalformedRow(IngestError):
    pass


class DuplicateRecord(IngestError):
    pass


class OffGrid(IngestError):
    pass


class RaggedPanel(IngestError):
    pass


class NonFiniteValue(IngestError):
    pass


class MissingField(InputError):
    pass


class InvalidSpec(InputError):
    pass


class KeyMismatch(InputError):
    pass


# --- computation -----------------------------------------------------------

class EmptyYearSet(ComputationError):
    pass


class InvalidHorizon(ComputationError):
    pass


class UnassignedCell(ComputationError):
    pass


class EmptyRegion(ComputationError):
    pass


class TooFewPoints(ComputationError):
    pass


class TooFewSamples(ComputationError):
    pass


class DegenerateComponent(ComputationError):
    pass


class NonFiniteInput(ComputationError):
    pass


class DimensionMismatch(ComputationError):
    pass


class SingularSystem(ComputationError):
    pass


class EmptyGrid(ComputationError):
    pass


class RegionTooSmall(ComputationError):
    pass


class MissingTestRecord(ComputationError):
    pass


class EmptyPredictions(ComputationError):
    pass


class NoConvergence(UserWarning):
    """Warned (not raised) when SMO stops on its iteration cap."""
