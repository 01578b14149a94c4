"""thumbforge: multimodal video thumbnail selection.

Aesthetic frame filtering with a double-column CNN, per-modality transformer
context encoding, context-gated fusion, and latent-space frame selection,
built on a small numpy-backed reverse-mode autodiff core.
"""

from .tensor import (
    Tensor,
    Tape,
    active_tape,
    backward,
    no_grad,
    set_default_dtype,
    get_default_dtype,
)
from .filter import FilterConfig, FilterNet, FrameSequence, sample_frames, top_k_frames
from .fusion import (
    FeatureBundle,
    FusionConfig,
    FusionNet,
    SelectionResult,
    forward,
    select_thumbnail,
)
from .evaluation import EvalReport, MatchRule, compare_reports, precision_at, true_positive
from .estimators import AestheticFilter, ThumbnailSelector
from .training import AdamOptimizer, TrainConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "Tensor", "Tape", "active_tape", "backward", "no_grad",
    "set_default_dtype", "get_default_dtype",
    "FilterConfig", "FilterNet", "FrameSequence", "sample_frames",
    "top_k_frames",
    "FeatureBundle", "FusionConfig", "FusionNet", "SelectionResult",
    "forward", "select_thumbnail",
    "EvalReport", "MatchRule", "compare_reports", "precision_at",
    "true_positive",
    "AestheticFilter", "ThumbnailSelector",
    "AdamOptimizer", "TrainConfig", "run_training",
    "__version__",
]
