"""Exception hierarchy shared by every module.

Each class name doubles as the diagnostic the CLI prints on failure, so keep
names stable.
"""


class FlowVoteError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(FlowVoteError, ValueError):
    pass


class EmptyInput(FlowVoteError):
    pass


class SchemaMismatch(FlowVoteError):
    pass


class ParseError(FlowVoteError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingIdentity(FlowVoteError):
    pass


class InsufficientData(FlowVoteError):
    pass


class EmptyGroup(FlowVoteError):
    pass


class FeatureResolutionError(FlowVoteError):
    def __init__(self, feature: str, message: str | None = None):
        super().__init__(message or f"cannot resolve feature {feature!r}")
        self.feature = feature


class TransformDomainError(FlowVoteError):
    pass


class NonNegativityViolation(FlowVoteError):
    pass


class UnknownVertex(FlowVoteError, KeyError):
    pass


class DimensionError(FlowVoteError):
    pass


class ConvergenceFailure(FlowVoteError):
    def __init__(self, message: str, gap: float | None = None):
        super().__init__(message)
        self.gap = gap


class AlignmentError(FlowVoteError):
    pass


class IncompatibleModel(FlowVoteError):
    pass


class DeserializationError(FlowVoteError):
    pass
