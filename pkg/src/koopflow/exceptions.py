"""Exception taxonomy for koopflow.

Every failure mode a caller may want to branch on gets its own class; all
inherit from KoopflowError so `except KoopflowError` catches library errors
without swallowing programming mistakes.
"""


class KoopflowError(Exception):
    """Base class for all koopflow errors."""


class CorpusFormatError(KoopflowError):
    """A corpus file could not be parsed; carries file and line context."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class DimensionError(KoopflowError):
    """State dimensions disagree (across demos, or input vs model)."""


class GoalMismatchError(KoopflowError):
    """Demonstrations do not end at a common goal within tolerance."""


class InsufficientDataError(KoopflowError):
    """Not enough points to form the requested structure."""


class DegenerateFieldError(KoopflowError):
    """The flow field is identically zero where a nonzero value is required."""


class DivergedTrainingError(KoopflowError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class NumericBlowupError(KoopflowError):
    """A rollout produced a non-finite state."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


class SamplingError(KoopflowError):
    """Rejection sampling failed to find admissible points."""


class EigensolverError(KoopflowError):
    """The eigensolver did not converge or produced residuals above tolerance."""


class CheckpointError(KoopflowError):
    """Base class for checkpoint I/O failures."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated, malformed, or fails integrity checks."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""
