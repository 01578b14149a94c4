"""Multimodal fusion and latent-space thumbnail selection.

Frame and audio features pass through their own transformer encoders and are
mean-pooled over time; all four modality vectors are context-gated, then
concatenated into a 4096-wide video representation which is gated again and
mapped by three dense layers to a 512-dim latent vector. The selected
thumbnail is the candidate frame row with the smallest mean squared
difference to that vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import tensor as tf
from .errors import DimensionError, InputError, TrainingDataError, ValidationError
from .layers import ContextGate, DenseLayer, EncoderBlock, encoder_forward, temporal_pool
from .tensor import Tensor, active_tape

FRAME_DIM = 512
AUDIO_DIM = 2048
TEXT_DIM = 768
MAX_FRAME_ROWS = 1000
MAX_AUDIO_ROWS = 300


def _as_matrix(value, width: int, name: str, max_rows: int) -> Tensor:
    t = value if isinstance(value, Tensor) else Tensor(value)
    if t.ndim != 2 or t.shape[1] != width:
        raise ValidationError(
            f"{name}: expected shape (T, {width}), got {t.shape}")
    if t.shape[0] < 1:
        raise ValidationError(f"{name}: needs at least one row")
    if t.shape[0] > max_rows:
        raise ValidationError(
            f"{name}: {t.shape[0]} rows exceeds the {max_rows}-row limit")
    return t


def _as_vector(value, width: int, name: str) -> Tensor:
    t = value if isinstance(value, Tensor) else Tensor(value)
    if t.shape != (width,):
        raise ValidationError(f"{name}: expected shape ({width},), got {t.shape}")
    return t


@dataclass
class FeatureBundle:
    """One video's per-modality features plus its ground-truth reference."""

    frames: Tensor
    audio: Tensor
    title: Tensor
    description: Tensor
    ground_truth_index: Optional[int] = None
    frame_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = _as_matrix(self.frames, FRAME_DIM, "frames", MAX_FRAME_ROWS)
        self.audio = _as_matrix(self.audio, AUDIO_DIM, "audio", MAX_AUDIO_ROWS)
        self.title = _as_vector(self.title, TEXT_DIM, "title")
        self.description = _as_vector(self.description, TEXT_DIM, "description")
        if self.frame_ids is None:
            self.frame_ids = np.arange(self.frames.shape[0])
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        if self.frame_ids.shape != (self.frames.shape[0],):
            raise ValidationError("frame_ids must align with frame rows")
        if self.ground_truth_index is not None:
            if not 0 <= self.ground_truth_index < self.frames.shape[0]:
                raise ValidationError(
                    f"ground_truth_index {self.ground_truth_index} outside "
                    f"[0, {self.frames.shape[0]})")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class FusionConfig:
    frame_dim: int = FRAME_DIM
    audio_dim: int = AUDIO_DIM
    text_dim: int = TEXT_DIM
    n_blocks: int = 2
    heads: int = 8
    ffn_dim: int = 128
    head_width: int = 512
    use_pe: bool = True
    seed: int = 0

    @property
    def concat_dim(self) -> int:
        return self.frame_dim + self.audio_dim + 2 * self.text_dim

    def to_dict(self) -> dict:
        return {
            "frame_dim": self.frame_dim, "audio_dim": self.audio_dim,
            "text_dim": self.text_dim, "n_blocks": self.n_blocks,
            "heads": self.heads, "ffn_dim": self.ffn_dim,
            "head_width": self.head_width, "use_pe": self.use_pe,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(**d)


class FusionNet:
    """Parameter container for the encoder-gating-head network."""

    def __init__(self, config: Optional[FusionConfig] = None):
        self.config = config or FusionConfig()
        c = self.config
        rng = np.random.default_rng(c.seed)
        self.frame_blocks = [EncoderBlock(c.frame_dim, c.heads, c.ffn_dim, rng)
                             for _ in range(c.n_blocks)]
        self.audio_blocks = [EncoderBlock(c.audio_dim, c.heads, c.ffn_dim, rng)
                             for _ in range(c.n_blocks)]
        self.gate_frames = ContextGate(c.frame_dim, rng)
        self.gate_audio = ContextGate(c.audio_dim, rng)
        self.gate_title = ContextGate(c.text_dim, rng)
        self.gate_description = ContextGate(c.text_dim, rng)
        self.gate_global = ContextGate(c.concat_dim, rng)
        self.head = [
            DenseLayer(c.concat_dim, c.head_width, "relu", rng),
            DenseLayer(c.head_width, c.head_width, "relu", rng),
            DenseLayer(c.head_width, c.frame_dim, "none", rng),
        ]

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i, block in enumerate(self.frame_blocks):
            for name, p in block.parameters():
                yield f"frame_enc.block{i}.{name}", p
        for i, block in enumerate(self.audio_blocks):
            for name, p in block.parameters():
                yield f"audio_enc.block{i}.{name}", p
        for gate_name, gate in (("frames", self.gate_frames),
                                ("audio", self.gate_audio),
                                ("title", self.gate_title),
                                ("description", self.gate_description),
                                ("global", self.gate_global)):
            for name, p in gate.parameters():
                yield f"gate.{gate_name}.{name}", p
        for i, layer in enumerate(self.head):
            for name, p in layer.parameters():
                yield f"head.{i}.{name}", p


def fuse_features(net: FusionNet, frames: Tensor, audio: Tensor, title: Tensor,
                  description: Tensor, return_video_vector: bool = False):
    """Encode, gate, concatenate, and map the four modality tensors to the
    latent vector o. Optionally also return the gated pre-head video vector."""
    c = net.config
    checks = ((frames, c.frame_dim, "frames"), (audio, c.audio_dim, "audio"),
              (title, c.text_dim, "title"),
              (description, c.text_dim, "description"))
    for t, width, name in checks:
        if t.shape[-1] != width:
            raise DimensionError(
                f"{name}: width {t.shape[-1]} does not match the network's "
                f"{width}")
    f = net.gate_frames(temporal_pool(
        encoder_forward(frames, net.frame_blocks, use_pe=c.use_pe)))
    a = net.gate_audio(temporal_pool(
        encoder_forward(audio, net.audio_blocks, use_pe=c.use_pe)))
    t = net.gate_title(title)
    d = net.gate_description(description)
    video = tf.concat([f, a, t, d], axis=0)
    gated = net.gate_global(video)
    out = gated
    for layer in net.head:
        out = layer(out)
    if return_video_vector:
        return out, video
    return out


def forward(bundle: FeatureBundle, net: FusionNet) -> Tensor:
    """Latent representation o of the video described by ``bundle``."""
    return fuse_features(net, bundle.frames, bundle.audio, bundle.title,
                         bundle.description)


@dataclass
class SelectionResult:
    """Chosen frame with the full ascending distance ranking."""

    selected_frame_id: int
    latent: np.ndarray
    ranking: list = field(default_factory=list)  # (frame_id, mse) ascending


def select_thumbnail(o, frames, frame_ids=None) -> SelectionResult:
    """Pick the frame row with minimum MSE to ``o``; ties go to the smaller
    frame id. The exhaustive per-row ranking is returned alongside."""
    latent = o.data if isinstance(o, Tensor) else np.asarray(o)
    mat = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise InputError(f"candidate matrix must be nonempty (T, d), got {mat.shape}")
    if latent.shape != (mat.shape[1],):
        raise DimensionError(
            f"latent width {latent.shape} does not match candidates {mat.shape}")
    ids = (np.arange(mat.shape[0]) if frame_ids is None
           else np.asarray(frame_ids, dtype=np.int64))
    if ids.shape != (mat.shape[0],):
        raise InputError("frame_ids must align with candidate rows")
    diff = mat - latent[None, :]
    dists = np.mean(diff * diff, axis=1)
    order = np.lexsort((ids, dists))
    ranking = [(int(ids[i]), float(dists[i])) for i in order]
    return SelectionResult(selected_frame_id=ranking[0][0],
                           latent=np.array(latent, copy=True),
                           ranking=ranking)


def pad_or_truncate(x: Tensor, target_rows: int):
    """Fix a (T, d) tensor to exactly ``target_rows`` rows: truncate the tail
    or append zero rows. Returns the tensor and a validity mask so pooling
    can average over real rows only."""
    if x.ndim != 2:
        raise DimensionError(f"pad_or_truncate expects (T, d), got {x.shape}")
    if target_rows < 1:
        raise InputError(f"target_rows must be >= 1, got {target_rows}")
    t = x.shape[0]
    if t == target_rows:
        return x, np.ones(t, dtype=bool)
    if t > target_rows:
        return tf.narrow(x, 0, 0, target_rows), np.ones(target_rows, dtype=bool)
    pad = Tensor(np.zeros((target_rows - t, x.shape[1]), dtype=x.dtype))
    mask = np.zeros(target_rows, dtype=bool)
    mask[:t] = True
    return tf.concat([x, pad], axis=0), mask


def train_step(bundle: FeatureBundle, net: FusionNet, optimizer) -> float:
    """One gradient step: loss is the MSE between the latent o and the
    ground-truth frame's feature row. Returns the loss value."""
    if bundle.ground_truth_index is None:
        raise TrainingDataError("bundle has no ground_truth_index to train on")
    tape = active_tape()
    tape.clear()
    o = forward(bundle, net)
    target = Tensor(bundle.frames.data[bundle.ground_truth_index].copy())
    loss = tf.mse(o, target)
    loss.backward()
    optimizer.update(dict(net.parameters()))
    tape.clear()
    value = loss.item()
    for _, p in net.parameters():
        p.grad = None
    return value
