"""Shared optimization loop: seeded Adam with bias correction, epoch
scheduling, best-validation checkpointing, and loss curves.

Training is single-sample (one image or one video per step) and fully
deterministic: the per-epoch visit order is derived from (seed, epoch), so a
run resumed from a checkpoint reproduces the uninterrupted trajectory.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import data_io
from . import tensor as tf
from .errors import GradientError, InputError, UsageError
from .filter import (
    FilterConfig,
    FilterNet,
    FilterSplit,
    dcnn_score,
    frame_crop_seed,
    make_views,
)
from .fusion import FeatureBundle, FusionConfig, FusionNet, forward, train_step
from .tensor import Tensor, active_tape, no_grad


class AdamOptimizer:
    """Adam with bias correction. Moments are allocated lazily per parameter
    and updated in place; a scratch buffer keeps steps allocation-free."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise UsageError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self._scratch: dict[str, np.ndarray] = {}

    def update(self, params: dict) -> None:
        """Apply one Adam step to every parameter, reading its ``grad``
        (missing gradients count as zero). Aborts before touching anything
        if any gradient is non-finite."""
        for name, p in params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise GradientError(
                    f"non-finite gradient in parameter {name!r} at step "
                    f"{self.step + 1}")
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for name, p in params.items():
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
                self._scratch[name] = np.empty_like(p.data)
            m, v, s = self.m[name], self.v[name], self._scratch[name]
            m *= self.beta1
            v *= self.beta2
            if g is not None:
                g = g.astype(p.data.dtype, copy=False)
                np.multiply(g, 1.0 - self.beta1, out=s)
                m += s
                np.multiply(g, g, out=s)
                s *= 1.0 - self.beta2
                v += s
            np.divide(v, c2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / c1
            p.data -= s

    def state_arrays(self) -> dict:
        out = {"step": np.asarray([float(self.step)])}
        for name, arr in self.m.items():
            out[f"m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"v.{name}"] = arr
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.step = int(arrays["step"][0])
        for key, arr in arrays.items():
            if key.startswith("m."):
                self.m[key[2:]] = np.array(arr)
            elif key.startswith("v."):
                self.v[key[2:]] = np.array(arr)
        for name, arr in self.m.items():
            self._scratch[name] = np.empty_like(arr)


@dataclass
class TrainConfig:
    model: str = "fusion"  # or "filter"
    epochs: int = 5
    lr: Optional[float] = None  # default: 1e-4 fusion, 1e-3 filter
    seed: int = 0
    checkpoint_dir: Optional[str] = None
    resume_from: Optional[str] = None
    save_optimizer_state: bool = True
    dtype: str = "float64"
    # filter-specific
    filter_depth: int = 2
    view_size: int = 32
    crop_seed: int = 0
    candidate_layout: bool = False
    # fusion-specific
    use_pe: bool = True

    def __post_init__(self):
        if self.model not in ("filter", "fusion"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if self.lr is None:
            self.lr = 1e-3 if self.model == "filter" else 1e-4
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if self.dtype not in ("float32", "float64"):
            raise UsageError(f"dtype must be float32 or float64, got {self.dtype}")


@dataclass
class TrainResult:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    best_dir: Optional[str] = None
    last_dir: Optional[str] = None
    loss_csv: Optional[str] = None
    net: object = None


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def _ema(values: list, alpha: float = 0.3) -> list:
    out, acc = [], None
    for v in values:
        acc = v if acc is None else alpha * v + (1 - alpha) * acc
        out.append(acc)
    return out


def _write_loss_csv(path: str, train_losses: list, val_losses: list) -> None:
    ema = _ema(train_losses)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse", "train_mse_ema"])
        for i, (tr, va, em) in enumerate(zip(train_losses, val_losses, ema), 1):
            writer.writerow([i, repr(tr), repr(va), repr(em)])


def evaluate_fusion(net: FusionNet, bundles: list) -> float:
    """Mean latent-vs-ground-truth MSE with gradients disabled."""
    scored = [b for b in bundles if b.ground_truth_index is not None]
    if not scored:
        raise UsageError("no bundle carries a ground_truth_index")
    total = 0.0
    tape_len = len(active_tape())
    with no_grad():
        for b in scored:
            o = forward(b, net)
            target = b.frames.data[b.ground_truth_index]
            total += float(np.mean((o.data - target) ** 2))
    assert len(active_tape()) == tape_len, "validation must not grow the tape"
    return total / len(scored)


def _views_for(images: list, view_size: int, crop_seed: int) -> list:
    # crop offsets derive from (crop_seed, position), so views are reusable
    # across epochs
    return [make_views(img, view_size, frame_crop_seed(crop_seed, i))
            for i, img in enumerate(images)]


def _filter_val_loss(net: FilterNet, views: list, scores: list) -> float:
    total = 0.0
    tape_len = len(active_tape())
    with no_grad():
        for v, score in zip(views, scores):
            total += (dcnn_score(v, net).item() - score) ** 2
    assert len(active_tape()) == tape_len, "validation must not grow the tape"
    return total / max(1, len(views))


def evaluate_filter(net: FilterNet, images: list, scores: list) -> float:
    views = _views_for(images, net.config.view_size, net.config.crop_seed)
    return _filter_val_loss(net, views, scores)


class _dtype_scope:
    def __init__(self, name: str):
        self.dtype = np.float32 if name == "float32" else np.float64

    def __enter__(self):
        self._prev = tf.get_default_dtype()
        tf.set_default_dtype(self.dtype)

    def __exit__(self, *exc):
        tf.set_default_dtype(self._prev)
        return False


def _save_stage(directory: str, kind: str, net, config_dict: dict,
                optimizer: Optional[AdamOptimizer], epoch: int) -> str:
    extra = None
    if optimizer is not None:
        extra = optimizer.state_arrays()
        extra["epoch"] = np.asarray([float(epoch)])
    data_io.save_checkpoint(directory, kind, dict(net.parameters()),
                            config_dict, extra=extra)
    return directory


def train_filter(config: TrainConfig, split: FilterSplit) -> TrainResult:
    if not split.train_images:
        raise InputError("empty training set")
    with _dtype_scope(config.dtype):
        fconfig = FilterConfig(view_size=config.view_size,
                               crop_seed=config.crop_seed, seed=config.seed,
                               depth=config.filter_depth,
                               candidate_layout=config.candidate_layout)
        net = FilterNet(fconfig)
        optimizer = AdamOptimizer(lr=config.lr)
        start_epoch = 0
        if config.resume_from:
            net = data_io.restore_filter_net(config.resume_from)
            _, _, _, extra = data_io.load_checkpoint(config.resume_from)
            optimizer.load_state_arrays(extra)
            start_epoch = int(extra["epoch"][0])
        fdict = {"view_size": fconfig.view_size, "crop_seed": fconfig.crop_seed,
                 "seed": fconfig.seed, "depth": fconfig.depth,
                 "candidate_layout": fconfig.candidate_layout}
        result = TrainResult(net=net)
        params = dict(net.parameters())
        tape = active_tape()
        train_views = _views_for(split.train_images, fconfig.view_size,
                                 fconfig.crop_seed)
        val_views = _views_for(split.val_images, fconfig.view_size,
                               fconfig.crop_seed)
        best = np.inf
        for epoch in range(start_epoch, config.epochs):
            order = _epoch_order(config.seed, epoch, len(split.train_images))
            running = 0.0
            for i in order:
                tape.clear()
                loss = tf.mse(dcnn_score(train_views[i], net),
                              Tensor(float(split.train_scores[i])))
                loss.backward()
                optimizer.update(params)
                running += loss.item()
                tape.clear()
                for p in params.values():
                    p.grad = None
            train_loss = running / len(order)
            val_loss = _filter_val_loss(net, val_views, split.val_scores) \
                if split.val_images else train_loss
            result.train_losses.append(train_loss)
            result.val_losses.append(val_loss)
            if config.checkpoint_dir:
                if val_loss < best:
                    best = val_loss
                    result.best_epoch = epoch + 1
                    result.best_dir = _save_stage(
                        os.path.join(config.checkpoint_dir, "best"), "filter",
                        net, fdict, None, epoch + 1)
                result.last_dir = _save_stage(
                    os.path.join(config.checkpoint_dir, "last"), "filter", net,
                    fdict,
                    optimizer if config.save_optimizer_state else None,
                    epoch + 1)
        if config.checkpoint_dir:
            result.loss_csv = os.path.join(config.checkpoint_dir, "loss_curve.csv")
            _write_loss_csv(result.loss_csv, result.train_losses, result.val_losses)
    return result


def train_fusion(config: TrainConfig, split) -> TrainResult:
    train_bundles = [b if isinstance(b, FeatureBundle) else data_io.load_bundle(b)
                     for b in split.train]
    val_bundles = [b if isinstance(b, FeatureBundle) else data_io.load_bundle(b)
                  for b in split.test]
    if not train_bundles:
        raise InputError("empty training set")
    with _dtype_scope(config.dtype):
        train_bundles = [_bundle_as_dtype(b) for b in train_bundles]
        val_bundles = [_bundle_as_dtype(b) for b in val_bundles]
        fconfig = FusionConfig(seed=config.seed, use_pe=config.use_pe)
        net = FusionNet(fconfig)
        optimizer = AdamOptimizer(lr=config.lr)
        start_epoch = 0
        if config.resume_from:
            net = data_io.restore_fusion_net(config.resume_from)
            _, _, _, extra = data_io.load_checkpoint(config.resume_from)
            optimizer.load_state_arrays(extra)
            start_epoch = int(extra["epoch"][0])
        result = TrainResult(net=net)
        best = np.inf
        val_scorable = [b for b in val_bundles if b.ground_truth_index is not None]
        for epoch in range(start_epoch, config.epochs):
            order = _epoch_order(config.seed, epoch, len(train_bundles))
            running = 0.0
            for i in order:
                running += train_step(train_bundles[i], net, optimizer)
            train_loss = running / len(order)
            val_loss = evaluate_fusion(net, val_scorable) if val_scorable \
                else train_loss
            result.train_losses.append(train_loss)
            result.val_losses.append(val_loss)
            if config.checkpoint_dir:
                if val_loss < best:
                    best = val_loss
                    result.best_epoch = epoch + 1
                    result.best_dir = _save_stage(
                        os.path.join(config.checkpoint_dir, "best"), "fusion",
                        net, fconfig.to_dict(), None, epoch + 1)
                result.last_dir = _save_stage(
                    os.path.join(config.checkpoint_dir, "last"), "fusion", net,
                    fconfig.to_dict(),
                    optimizer if config.save_optimizer_state else None,
                    epoch + 1)
        if config.checkpoint_dir:
            result.loss_csv = os.path.join(config.checkpoint_dir, "loss_curve.csv")
            _write_loss_csv(result.loss_csv, result.train_losses, result.val_losses)
    return result


def _bundle_as_dtype(bundle: FeatureBundle) -> FeatureBundle:
    dtype = tf.get_default_dtype()
    if bundle.frames.data.dtype == dtype:
        return bundle
    return FeatureBundle(
        frames=Tensor(bundle.frames.data, dtype=dtype),
        audio=Tensor(bundle.audio.data, dtype=dtype),
        title=Tensor(bundle.title.data, dtype=dtype),
        description=Tensor(bundle.description.data, dtype=dtype),
        ground_truth_index=bundle.ground_truth_index,
        frame_ids=bundle.frame_ids,
    )


def run_training(config: TrainConfig, dataset) -> TrainResult:
    """Dispatch to the filter or fusion loop based on ``config.model``."""
    if config.model == "filter":
        if not isinstance(dataset, FilterSplit):
            raise UsageError("filter training expects a FilterSplit")
        return train_filter(config, dataset)
    return train_fusion(config, dataset)
