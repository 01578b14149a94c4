"""Scikit-learn style estimators wrapping the filter and fusion models.

Both follow the usual conventions: constructor arguments are stored verbatim
(so ``get_params``/``set_params``/``clone`` work), fitting populates
trailing-underscore attributes, and ``fit`` returns self.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import tensor as tf
from .filter import FilterSplit, dcnn_score, frame_crop_seed, make_views
from .fusion import forward, select_thumbnail
from .tensor import no_grad
from .training import TrainConfig, train_filter, train_fusion
from .validation import check_bundles, check_images, check_scores


def _require_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")


class AestheticFilter(BaseEstimator):
    """Regressor scoring the aesthetic quality of images from a global
    resized view and a local crop."""

    def __init__(self, depth: int = 2, view_size: int = 32, epochs: int = 5,
                 lr: float = 1e-3, seed: int = 0, crop_seed: int = 0,
                 val_fraction: float = 0.0):
        self.depth = depth
        self.view_size = view_size
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.crop_seed = crop_seed
        self.val_fraction = val_fraction

    def fit(self, X, y):
        images = check_images(X)
        scores = check_scores(y, len(images))
        n_val = int(len(images) * self.val_fraction)
        cut = len(images) - n_val
        split = FilterSplit(train_images=images[:cut],
                            train_scores=list(scores[:cut]),
                            val_images=images[cut:],
                            val_scores=list(scores[cut:]))
        config = TrainConfig(model="filter", epochs=self.epochs, lr=self.lr,
                             seed=self.seed, filter_depth=self.depth,
                             view_size=self.view_size,
                             crop_seed=self.crop_seed)
        result = train_filter(config, split)
        self.net_ = result.net
        self.train_losses_ = result.train_losses
        self.val_losses_ = result.val_losses
        return self

    def predict(self, X) -> np.ndarray:
        _require_fitted(self, "net_")
        images = check_images(X)
        out = np.zeros(len(images))
        with no_grad():
            for i, img in enumerate(images):
                views = make_views(img, self.view_size,
                                   frame_crop_seed(self.crop_seed, i))
                out[i] = dcnn_score(views, self.net_).item()
        return out

    def score(self, X, y) -> float:
        """Coefficient of determination of the predicted scores."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        pred = self.predict(X)
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0


class ThumbnailSelector(BaseEstimator):
    """Selector mapping a multimodal FeatureBundle to the frame whose feature
    row is nearest the fused latent vector."""

    def __init__(self, epochs: int = 30, lr: float = 1e-4, seed: int = 0,
                 use_pe: bool = True, dtype: str = "float64",
                 val_bundles: Optional[list] = None):
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.use_pe = use_pe
        self.dtype = dtype
        self.val_bundles = val_bundles

    def fit(self, X, y=None):
        bundles = check_bundles(X, require_ground_truth=True)
        from .data_io import DatasetSplit
        split = DatasetSplit(train=bundles, test=list(self.val_bundles or []))
        config = TrainConfig(model="fusion", epochs=self.epochs, lr=self.lr,
                             seed=self.seed, use_pe=self.use_pe,
                             dtype=self.dtype)
        result = train_fusion(config, split)
        self.net_ = result.net
        self.train_losses_ = result.train_losses
        self.val_losses_ = result.val_losses
        return self

    def transform(self, X) -> np.ndarray:
        """Latent vector per bundle, stacked as (n, 512)."""
        _require_fitted(self, "net_")
        bundles = check_bundles(X)
        out = []
        with self._net_dtype():
            with no_grad():
                for b in bundles:
                    out.append(forward(self._cast(b), self.net_).data.copy())
        return np.stack(out)

    def predict(self, X) -> np.ndarray:
        """Selected frame id per bundle."""
        _require_fitted(self, "net_")
        bundles = check_bundles(X)
        latents = self.transform(bundles)
        return np.array([
            select_thumbnail(o, b.frames.data, b.frame_ids).selected_frame_id
            for o, b in zip(latents, bundles)], dtype=np.int64)

    def rank(self, bundle):
        """Full SelectionResult (latent plus ascending distance ranking)."""
        _require_fitted(self, "net_")
        latent = self.transform([bundle])[0]
        return select_thumbnail(latent, bundle.frames.data, bundle.frame_ids)

    def score(self, X, y=None) -> float:
        """Exact-match precision against each bundle's ground truth."""
        bundles = check_bundles(X, require_ground_truth=True)
        picked = self.predict(bundles)
        truth = np.array([b.frame_ids[b.ground_truth_index] for b in bundles])
        return float(np.mean(picked == truth))

    def _net_dtype(self):
        from .training import _dtype_scope
        return _dtype_scope(self.dtype)

    def _cast(self, bundle):
        from .training import _bundle_as_dtype
        return _bundle_as_dtype(bundle)
