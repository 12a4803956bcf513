"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class InvalidBand(PipelineError, ValueError):
    pass


class DesignUnstable(PipelineError):
    pass


class SignalTooShort(PipelineError, ValueError):
    pass


class RankDeficient(UserWarning):
    """Issued when fewer kernel components than requested carry variance."""


class DimMismatch(PipelineError, ValueError):
    pass


class ShapeMismatch(PipelineError, ValueError):
    pass


class GraphNotRecorded(PipelineError, RuntimeError):
    """``backward`` was called without a preceding ``forward``."""


class TopologyMismatch(PipelineError, ValueError):
    pass


class EmptySplit(PipelineError, ValueError):
    pass


class NonFiniteLoss(PipelineError, FloatingPointError):
    pass


class TooFewUtterances(PipelineError, ValueError):
    pass


class CorruptFile(PipelineError, ValueError):
    pass


class LengthMismatch(PipelineError, ValueError):
    pass


class DegenerateRange(PipelineError, ValueError):
    pass


class DegenerateDim(UserWarning):
    """A training dimension had zero variance and was left unscaled."""
