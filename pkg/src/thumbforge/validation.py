"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .fusion import FeatureBundle


def check_images(X) -> list:
    """Accept a list of (H, W, 3) arrays or a single (N, H, W, 3) array."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        X = list(X)
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise InputError("expected a nonempty list of images")
    out = []
    for i, img in enumerate(X):
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InputError(f"image {i}: expected (H, W, 3), got {arr.shape}")
        out.append(arr)
    return out


def check_scores(y, n: int) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n:
        raise InputError(f"got {arr.shape[0]} scores for {n} images")
    if not np.isfinite(arr).all():
        raise InputError("scores must be finite")
    return arr


def check_bundles(X, require_ground_truth: bool = False) -> list:
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise InputError("expected a nonempty list of FeatureBundle")
    for i, b in enumerate(X):
        if not isinstance(b, FeatureBundle):
            raise InputError(f"element {i} is not a FeatureBundle")
        if require_ground_truth and b.ground_truth_index is None:
            raise InputError(f"bundle {i} lacks a ground_truth_index")
    return list(X)
