"""Exception types shared across the package.

Domain errors carry enough context (record ids, pair ids) for the CLI to
print an actionable message and exit with code 1.
"""


class FgresqError(Exception):
    """Base class for all domain errors."""


class ManifestError(FgresqError):
    """Manifest file is malformed. Carries the offending line/record."""

    def __init__(self, message, line_no=None, record=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
        self.record = record


class IntegrityError(FgresqError):
    """A record references an id that does not resolve."""


class EmptySceneError(FgresqError):
    """MOS normalization requested for a scene with no scores."""


class EmptyDatasetError(FgresqError):
    """An operation needs at least one fine-grained pair and found none."""


class UnscoredPairError(FgresqError):
    """Coarse filtering hit a pair whose members have no normalized MOS."""


class EmptyImageError(FgresqError):
    """A zero-sized image was passed to an image operation."""


class DimensionError(FgresqError):
    """Image shapes do not match, or an image is smaller than a filter window."""


class PairImageError(FgresqError):
    """An image referenced by a pair could not be read."""

    def __init__(self, pair_id, message):
        super().__init__(f"pair {pair_id}: {message}")
        self.pair_id = pair_id


class UndefinedCorrelationError(FgresqError):
    """Correlation is undefined (constant input or too few samples)."""


class DegenerateBatchError(FgresqError):
    """Contrastive alignment needs a batch of at least two samples."""


class DegenerateSceneError(FgresqError):
    """Scene fidelity loss needs at least two samples in the scene."""


class SceneKeyMismatchError(FgresqError):
    """Per-scene losses and counts were keyed by different scene sets."""


class IncomparableReportsError(FgresqError):
    """Ablation comparison across reports from different splits."""


class TrainingDivergedError(FgresqError):
    """A non-finite loss was observed; training aborted."""

    def __init__(self, step, last_checkpoint=None):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.last_checkpoint = last_checkpoint


class UnknownPairError(FgresqError):
    """Annotation operation on a pair id that does not exist."""


class NotAssignedError(FgresqError):
    """Annotator submitted a preference for a pair outside their group."""


class DuplicateSubmissionError(FgresqError):
    """A (pair, annotator, round) preference already exists."""


class NotAuthorizedError(FgresqError):
    """Caller role does not permit the operation."""


class InvalidStateError(FgresqError):
    """Operation not valid for the pair's current annotation status."""
