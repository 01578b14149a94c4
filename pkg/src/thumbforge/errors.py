"""Exception taxonomy. CLI maps InputError subclasses to exit 2 and
CheckpointError to exit 3."""


class ThumbforgeError(Exception):
    """Base class for all library errors."""


class DimensionError(ThumbforgeError):
    """Tensor shapes incompatible with the requested operation."""


class ConfigurationError(ThumbforgeError):
    """Layer or network built with inconsistent hyperparameters."""


class UsageError(ThumbforgeError):
    """API called outside its contract (non-scalar backward, empty results...)."""


class InputError(ThumbforgeError):
    """User-supplied data is unusable (missing file, degenerate frame...)."""


class ValidationError(InputError):
    """Structured input violates a declared invariant (bad modality width...)."""


class InvalidLabelError(InputError):
    """Aesthetic score histogram carries no mass."""


class TrainingDataError(InputError):
    """Training was requested on an example lacking its target."""


class TensorFormatError(ThumbforgeError):
    """Tensor file header is malformed (bad magic, version or dtype code)."""


class TensorCorruptionError(ThumbforgeError):
    """Tensor file payload does not match its declared dimensions."""


class GradientError(ThumbforgeError):
    """A parameter gradient became non-finite during optimization."""


class CheckpointError(ThumbforgeError):
    """Checkpoint missing, unreadable, or inconsistent with the requested model."""
