"""Exception and warning types raised across the pipeline."""


class QPEulerError(Exception):
    """Base class for all library errors."""


class ConfigError(QPEulerError):
    """Invalid or inconsistent run configuration."""


class StageError(QPEulerError):
    """A numerical stage failed; carries the stage name when raised by the CLI."""


class NonFiniteStateError(StageError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-finite ODE state at node {index}")


class BracketError(StageError):
    pass


class ShapeError(StageError):
    pass


class SingularJetError(StageError):
    pass


class DegenerateAnchorError(StageError):
    pass


class SingularPointError(StageError):
    pass


class NormalizationError(StageError):
    pass


class SpectralCountError(StageError):
    pass


class FixedPointError(StageError):
    pass


class DomainError(StageError):
    pass


class RootCountError(StageError):
    pass


class SingularOperatorError(StageError):
    pass


class StripMonotonicityError(StageError):
    pass


class EtaTooLargeError(StageError):
    pass


class ContractionError(StageError):
    pass


class StepSizeError(StageError):
    pass


class SmallDivisorError(StageError):
    def __init__(self, mode, divisor):
        self.mode = mode
        self.divisor = divisor
        super().__init__(f"small divisor {divisor:.3e} at mode {mode}")


class StagnationError(StageError):
    pass


class ChartError(StageError):
    pass


class AliasWarning(UserWarning):
    pass


class TruncationWarning(UserWarning):
    pass


class DegenerateFieldWarning(UserWarning):
    pass
