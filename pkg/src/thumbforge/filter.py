"""Aesthetic frame filtering: temporal subsampling, score-histogram labels,
the double-column scoring CNN, and top-k frame selection.

Each scoring column sees one view of a frame: a global anisotropic resize
capturing layout, and a local crop capturing detail. Column outputs (64 each)
are concatenated and mapped to a scalar aesthetic score. The production
column is two convolutional blocks, pooling after the first block only and
with no batch normalization; the depth ablation uses candidate columns that
pool after every block.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import tensor as tf
from .errors import InputError, InvalidLabelError, UsageError
from .images import bilinear_resize, read_image
from .layers import DenseLayer, temporal_pool, xavier_uniform
from .tensor import Tensor, no_grad


@dataclass
class FrameSequence:
    """Ordered frames with their original temporal positions."""

    frames: list
    indices: list[int]

    def __post_init__(self):
        if len(self.frames) != len(self.indices):
            raise InputError("frame/index count mismatch")
        for prev, cur in zip(self.indices, self.indices[1:]):
            if cur <= prev:
                raise InputError("frame indices must be strictly increasing")
        for f in self.frames:
            if np.asarray(f).ndim != 3 or np.asarray(f).shape[2] != 3:
                raise InputError("frames must have shape (H, W, 3)")

    def __len__(self) -> int:
        return len(self.frames)


def sample_frames(seq: FrameSequence, stride: int = 9) -> FrameSequence:
    """Keep frames at positions 0, stride, 2*stride, ... of the sequence."""
    if stride < 1:
        raise UsageError(f"stride must be >= 1, got {stride}")
    keep = range(0, len(seq), stride)
    return FrameSequence([seq.frames[i] for i in keep],
                         [seq.indices[i] for i in keep])


@dataclass
class AvaLabel:
    """Counts of aesthetic votes for scores 1..10."""

    histogram: np.ndarray

    def __post_init__(self):
        self.histogram = np.asarray(self.histogram, dtype=np.float64)
        if self.histogram.shape != (10,):
            raise InputError("histogram must have 10 bins (scores 1..10)")
        if np.any(self.histogram < 0):
            raise InputError("histogram counts must be nonnegative")


def ava_weighted_mean(label: AvaLabel) -> float:
    """Frequency-weighted average score, in [1, 10]."""
    total = label.histogram.sum()
    if total <= 0:
        raise InvalidLabelError("score histogram has no mass")
    scores = np.arange(1, 11, dtype=np.float64)
    return float((scores * label.histogram).sum() / total)


@dataclass
class ViewPair:
    """Global (anisotropic resize) and local (crop) views of one frame."""

    global_view: np.ndarray
    local_view: np.ndarray
    size: int


def make_views(frame: np.ndarray, view_size: int, crop_seed) -> ViewPair:
    """Build the two scoring views. The crop offset is drawn from a seeded
    generator so repeated calls with the same seed crop identically."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise InputError(f"frame must be (H, W, 3), got {frame.shape}")
    h, w = frame.shape[:2]
    if h < 1 or w < 1 or view_size < 1:
        raise InputError(f"degenerate frame {h}x{w} or view size {view_size}")
    global_view = bilinear_resize(frame, view_size, view_size)
    src = frame
    if h < view_size or w < view_size:
        src = bilinear_resize(frame, max(h, view_size), max(w, view_size))
        h, w = src.shape[:2]
    rng = np.random.default_rng(crop_seed)
    oy = int(rng.integers(0, h - view_size + 1))
    ox = int(rng.integers(0, w - view_size + 1))
    local_view = src[oy:oy + view_size, ox:ox + view_size].copy()
    return ViewPair(global_view, local_view, view_size)


class ConvBlock:
    """3x3 same-padding convolution + relu, with optional 2x2 max pooling."""

    def __init__(self, in_ch: int, out_ch: int, pool: bool,
                 rng: np.random.Generator):
        self.pool = pool
        self.kernel = xavier_uniform((3, 3, in_ch, out_ch), rng)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = tf.relu(tf.add(tf.conv2d(x, self.kernel, stride=1, padding=1),
                             self.bias))
        if self.pool:
            out = tf.maxpool2d(out, 2, 2)
        return out

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "kernel", self.kernel
        yield "bias", self.bias


class ScoringColumn:
    """Stack of conv blocks followed by spatial averaging and a 64-wide
    projection."""

    OUT_DIM = 64

    def __init__(self, channels: Sequence[int], pool_flags: Sequence[bool],
                 rng: np.random.Generator):
        self.blocks = []
        prev = 3
        for ch, pool in zip(channels, pool_flags):
            self.blocks.append(ConvBlock(prev, ch, pool, rng))
            prev = ch
        self.proj = DenseLayer(prev, self.OUT_DIM, "relu", rng)

    def __call__(self, view: Tensor) -> Tensor:
        x = view
        for block in self.blocks:
            x = block(x)
        h, w, c = x.shape
        pooled = temporal_pool(tf.reshape(x, (h * w, c)))  # spatial mean
        return self.proj(pooled)

    def describe(self) -> list[str]:
        out = []
        for block in self.blocks:
            out.append("conv")
            if block.pool:
                out.append("maxpool")
        out.append("dense")
        return out

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i, block in enumerate(self.blocks):
            for name, p in block.parameters():
                yield f"conv{i}.{name}", p
        for name, p in self.proj.parameters():
            yield f"proj.{name}", p


@dataclass
class FilterConfig:
    view_size: int = 32
    crop_seed: int = 0
    seed: int = 0
    depth: int = 2
    # pooling after every block is the ablation-candidate layout; the
    # production two-block net drops pooling after the last block
    candidate_layout: bool = False

    CHANNELS = (16, 32, 48, 64)

    def column_channels(self) -> tuple:
        if not 1 <= self.depth <= len(self.CHANNELS):
            raise UsageError(f"depth must be in [1, {len(self.CHANNELS)}]")
        return self.CHANNELS[:self.depth]

    def pool_flags(self) -> tuple:
        if self.candidate_layout:
            return (True,) * self.depth
        return (True,) * (self.depth - 1) + (False,)


class FilterNet:
    """Double-column aesthetic scorer: independent global/local columns,
    concatenated into a 128-dim representation and mapped to one score."""

    def __init__(self, config: Optional[FilterConfig] = None):
        self.config = config or FilterConfig()
        rng = np.random.default_rng(self.config.seed)
        channels = self.config.column_channels()
        pools = self.config.pool_flags()
        self.global_column = ScoringColumn(channels, pools, rng)
        self.local_column = ScoringColumn(channels, pools, rng)
        self.head = DenseLayer(2 * ScoringColumn.OUT_DIM, 1, "none", rng)

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self.global_column.parameters():
            yield f"global.{name}", p
        for name, p in self.local_column.parameters():
            yield f"local.{name}", p
        for name, p in self.head.parameters():
            yield f"head.{name}", p

    def describe(self) -> dict:
        return {
            "global": self.global_column.describe(),
            "local": self.local_column.describe(),
            "head": ["concat", "dense"],
        }


def dcnn_score(views: ViewPair, net: FilterNet) -> Tensor:
    """Scalar aesthetic score for one frame's view pair. Differentiable in
    the network parameters; no inference-time randomness."""
    s = views.size
    for v in (views.global_view, views.local_view):
        if np.asarray(v).shape != (s, s, 3):
            raise InputError(
                f"view shape {np.asarray(v).shape} does not match size {s}")
    if s != net.config.view_size:
        raise InputError(
            f"net expects {net.config.view_size}x{net.config.view_size} views, "
            f"got {s}x{s}")
    dtype = tf.get_default_dtype()
    g = Tensor(np.asarray(views.global_view, dtype=dtype))
    loc = Tensor(np.asarray(views.local_view, dtype=dtype))
    rep = tf.concat([net.global_column(g), net.local_column(loc)], axis=0)
    return tf.reshape(net.head(rep), ())


def frame_crop_seed(base_seed: int, frame_index: int) -> list:
    """Per-frame crop seed: stable under frame reordering."""
    return [base_seed, frame_index]


def score_frames(seq: FrameSequence, net: FilterNet) -> np.ndarray:
    """Deterministic aesthetic score per frame, gradients disabled."""
    scores = np.zeros(len(seq))
    with no_grad():
        for i, (frame, idx) in enumerate(zip(seq.frames, seq.indices)):
            views = make_views(frame, net.config.view_size,
                               frame_crop_seed(net.config.crop_seed, idx))
            scores[i] = dcnn_score(views, net).item()
    return scores


def select_top_k(scores: np.ndarray, indices: Sequence[int], k: int) -> np.ndarray:
    """Positions of the k highest scores, in temporal order, breaking score
    ties toward the earlier index."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.lexsort((np.asarray(indices), -scores))[:k]
    keep.sort()
    return keep


def top_k_frames(seq: FrameSequence, net: FilterNet, k: int = 1000) -> FrameSequence:
    """The min(k, len) highest-scoring frames, returned in temporal order.
    Ties keep the earlier frame."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if len(seq) <= k:
        return FrameSequence(list(seq.frames), list(seq.indices))
    scores = score_frames(seq, net)
    keep = select_top_k(scores, seq.indices, k)
    return FrameSequence([seq.frames[i] for i in keep],
                         [seq.indices[i] for i in keep])


# --- synthetic desk-scale data ----------------------------------------------

def synth_aesthetic_dataset(n: int, size: int = 32, seed: int = 0,
                            votes: int = 40):
    """Images whose mean brightness tracks a latent aesthetic score, with
    vote histograms sampled around that score. Fully reproducible from the
    seed."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(n):
        latent = rng.uniform(2.0, 9.0)
        base = rng.uniform(0.0, 1.0, size=(size, size, 3))
        brightness = 0.1 + 0.8 * (latent - 1.0) / 9.0
        img = np.clip(brightness + 0.3 * (base - 0.5), 0.0, 1.0)
        drawn = np.clip(np.round(rng.normal(latent, 0.6, size=votes)), 1, 10)
        hist = np.bincount(drawn.astype(int), minlength=11)[1:11]
        images.append(img)
        labels.append(AvaLabel(hist))
    return images, labels


def load_ava_csv(path: str) -> dict:
    """AVA-style label table: image_id, count_1, ..., count_10."""
    import csv
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 11:
            raise InputError(f"{path}: expected 11 columns, got {len(header)}")
        for row in reader:
            if len(row) != 11:
                raise InputError(f"{path}: malformed row {row!r}")
            out[row[0]] = AvaLabel(np.array([float(c) for c in row[1:]]))
    return out


_FRAME_ID_RE = re.compile(r"(\d+)(?=\.[A-Za-z]+$)")


def parse_frame_id(filename: str) -> Optional[int]:
    m = _FRAME_ID_RE.search(os.path.basename(filename))
    return int(m.group(1)) if m else None


def read_frames_dir(path: str,
                    on_error: Optional[Callable[[str, Exception], None]] = None
                    ) -> FrameSequence:
    """Load every PPM/PNG in a directory as a FrameSequence. Frame ids come
    from the trailing digits of each filename (position otherwise). Files
    that fail to load raise, or are skipped via ``on_error``."""
    if not os.path.isdir(path):
        raise InputError(f"frames directory not found: {path}")
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".ppm", ".png")))
    if not names:
        raise InputError(f"no PPM/PNG frames in {path}")
    frames, indices = [], []
    for pos, name in enumerate(names):
        full = os.path.join(path, name)
        try:
            img = read_image(full)
        except Exception as exc:
            if on_error is None:
                raise
            on_error(name, exc)
            continue
        fid = parse_frame_id(name)
        frames.append(img)
        indices.append(fid if fid is not None else pos)
    order = np.argsort(np.asarray(indices, dtype=np.int64), kind="stable")
    return FrameSequence([frames[i] for i in order],
                         [int(indices[i]) for i in order])


def read_frames_tensor(path: str) -> FrameSequence:
    """Load frames from a single (N, H, W, 3) tensor file; frame ids are the
    row positions."""
    from .data_io import read_tensor

    stack = read_tensor(path).data
    if stack.ndim != 4 or stack.shape[3] != 3 or stack.shape[0] < 1:
        raise InputError(
            f"{path}: expected a nonempty (N, H, W, 3) frame stack, got "
            f"{stack.shape}")
    return FrameSequence([np.asarray(stack[i], dtype=np.float64)
                          for i in range(stack.shape[0])],
                         list(range(stack.shape[0])))


def load_frames(path: str,
                on_error: Optional[Callable[[str, Exception], None]] = None
                ) -> FrameSequence:
    """Frame input boundary: a directory of PPM/PNG images, or one raw
    (N, H, W, 3) tensor file."""
    if os.path.isfile(path) and path.endswith(".tft"):
        return read_frames_tensor(path)
    return read_frames_dir(path, on_error=on_error)


# --- depth ablation ----------------------------------------------------------

@dataclass
class AblationRow:
    depth: int
    val_mse: list[float]
    seconds: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    baseline_mse: float
    epochs: int = field(default=5)

    def to_text(self) -> str:
        header = ["Epoch"] + [f"{r.depth}-block" for r in self.rows]
        lines = ["  ".join(f"{h:>10}" for h in header)]
        for e in range(self.epochs):
            cells = [f"{e + 1:>10}"] + [f"{r.val_mse[e]:>10.4f}" for r in self.rows]
            lines.append("  ".join(cells))
        times = [f"{'Time (s)':>10}"] + [f"{r.seconds:>10.1f}" for r in self.rows]
        lines.append("  ".join(times))
        lines.append(f"constant-prediction baseline MSE: {self.baseline_mse:.4f}")
        return "\n".join(lines)


def ablate_depth(images: Sequence[np.ndarray], labels: Sequence[AvaLabel],
                 depths: Sequence[int] = (2, 3, 4), epochs: int = 5,
                 seed: int = 0, lr: float = 1e-3,
                 val_fraction: float = 0.2,
                 view_size: Optional[int] = None) -> AblationReport:
    """Train candidate columns of several depths and report per-epoch
    validation MSE plus wall time, against the label-variance baseline."""
    from .training import TrainConfig, train_filter

    if len(images) != len(labels):
        raise InputError("images and labels differ in length")
    n_val = max(1, int(len(images) * val_fraction))
    split = FilterSplit(
        train_images=list(images[:-n_val]),
        train_scores=[ava_weighted_mean(l) for l in labels[:-n_val]],
        val_images=list(images[-n_val:]),
        val_scores=[ava_weighted_mean(l) for l in labels[-n_val:]],
    )
    baseline = float(np.var(np.asarray(split.val_scores)))
    vs = view_size if view_size is not None else int(np.asarray(images[0]).shape[0])
    rows = []
    for depth in depths:
        config = TrainConfig(model="filter", epochs=epochs, lr=lr, seed=seed,
                             filter_depth=depth, view_size=vs,
                             candidate_layout=True)
        start = time.monotonic()
        result = train_filter(config, split)
        rows.append(AblationRow(depth=depth, val_mse=result.val_losses,
                                seconds=time.monotonic() - start))
    return AblationReport(rows=rows, baseline_mse=baseline, epochs=epochs)


@dataclass
class FilterSplit:
    """Train/validation split of (image, score) pairs for the filter."""

    train_images: list
    train_scores: list[float]
    val_images: list
    val_scores: list[float]
