"""Exception types shared across the package."""


class WavemorphError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(WavemorphError, ValueError):
    """Array shapes or sizes are incompatible with the requested operation."""


class DomainError(WavemorphError, ValueError):
    """A numeric argument is outside the mathematical domain of the operation."""


class ContractError(WavemorphError, ValueError):
    """A caller broke an API precondition (bad graph state, missing grads, ...)."""


class PipelineError(WavemorphError, ValueError):
    """Track preparation failed (too long, no voiced frames, malformed data)."""


class AlignmentError(PipelineError):
    """A parallel pair cannot be time-aligned (syllable inventories disagree)."""


class CorpusError(WavemorphError, ValueError):
    """A corpus file or manifest is malformed."""


class EvalError(WavemorphError, RuntimeError):
    """An evaluation metric is undefined for the given inputs."""


class TrainingDiverged(WavemorphError, RuntimeError):
    """A loss became non-finite during optimization."""
