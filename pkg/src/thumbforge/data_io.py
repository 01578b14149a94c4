"""Persistence boundary: the TFTF binary tensor format, video manifests,
dataset splits, model checkpoints, and the synthetic feature provider.

TFTF layout (all integers little-endian):

    magic   4 bytes  "TFTF"
    version u32      1
    dtype   u32      0 = float32, 1 = float64
    ndim    u32
    dims    ndim x u64
    payload row-major values, little-endian

Round-trips are bit-exact, which keeps evaluation distances reproducible.
Readers are concurrency-safe; writers need exclusive access per path.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    CheckpointError,
    InputError,
    TensorCorruptionError,
    TensorFormatError,
    ValidationError,
)
from .fusion import FeatureBundle, FusionConfig
from .tensor import Tensor

MAGIC = b"TFTF"
VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_KIND = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(path: Union[str, os.PathLike], x) -> None:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    code = _CODE_FOR_KIND.get(arr.dtype)
    if code is None:
        raise InputError(f"unsupported tensor dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", MAGIC, VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[code]).tobytes())


def read_tensor(path: Union[str, os.PathLike]) -> Tensor:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TensorCorruptionError(
            f"{path}: file too short for a header ({len(raw)} bytes)")
    magic, version, code, ndim = struct.unpack_from("<4sIII", raw, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version} at offset 4")
    if code not in _DTYPE_CODES:
        raise TensorFormatError(f"{path}: unknown dtype code {code} at offset 8")
    dims_end = 16 + 8 * ndim
    if len(raw) < dims_end:
        raise TensorCorruptionError(f"{path}: header truncated in dims table")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 16)
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TensorCorruptionError(
            f"{path}: payload is {len(payload)} bytes, dims {dims} require "
            f"{expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return Tensor(arr, dtype=dtype.type)


# --- manifests ---------------------------------------------------------------

@dataclass
class VideoManifest:
    """Pointers to one video's feature files and ground truth."""

    video_id: str
    feature_paths: dict  # modality name -> tensor file path
    category: str = "Unknown"
    ground_truth_index: Optional[int] = None
    ground_truth_image: Optional[str] = None
    frames_dir: Optional[str] = None
    duration_seconds: Optional[float] = None

    MODALITIES = ("frames", "audio", "title", "description")

    def __post_init__(self):
        missing = [m for m in self.MODALITIES if m not in self.feature_paths]
        if missing:
            raise ValidationError(
                f"manifest {self.video_id}: missing feature paths for {missing}")

    def to_dict(self) -> dict:
        out = {"video_id": self.video_id, "category": self.category,
               "features": dict(self.feature_paths)}
        if self.ground_truth_index is not None:
            out["ground_truth"] = {"frame_index": self.ground_truth_index}
        elif self.ground_truth_image is not None:
            out["ground_truth"] = {"image": self.ground_truth_image}
        if self.frames_dir is not None:
            out["frames_dir"] = self.frames_dir
        if self.duration_seconds is not None:
            out["duration_seconds"] = self.duration_seconds
        return out


def save_manifest(path: str, manifest: VideoManifest) -> None:
    with open(path, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str) -> VideoManifest:
    if not os.path.exists(path):
        raise InputError(f"manifest not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        features = {k: resolve(v) for k, v in doc["features"].items()}
        gt = doc.get("ground_truth", {})
        manifest = VideoManifest(
            video_id=doc["video_id"],
            category=doc.get("category", "Unknown"),
            feature_paths=features,
            ground_truth_index=gt.get("frame_index"),
            ground_truth_image=(resolve(gt["image"]) if "image" in gt else None),
            frames_dir=(resolve(doc["frames_dir"]) if "frames_dir" in doc else None),
            duration_seconds=doc.get("duration_seconds"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed manifest ({exc})") from exc
    return manifest


def load_bundle(manifest: VideoManifest) -> FeatureBundle:
    """Load and validate one video's features. Width violations name the
    offending modality."""
    tensors = {}
    for name in VideoManifest.MODALITIES:
        fpath = manifest.feature_paths[name]
        if not os.path.exists(fpath):
            raise InputError(
                f"{manifest.video_id}: {name} tensor file missing: {fpath}")
        tensors[name] = read_tensor(fpath)
    return FeatureBundle(
        frames=tensors["frames"],
        audio=tensors["audio"],
        title=tensors["title"],
        description=tensors["description"],
        ground_truth_index=manifest.ground_truth_index,
    )


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def __post_init__(self):
        # entries may be manifests or in-memory bundles; only manifests carry ids
        ids = [m.video_id for m in list(self.train) + list(self.test)
               if hasattr(m, "video_id")]
        if len(ids) != len(set(ids)):
            raise ValidationError("dataset split contains duplicate video ids")


def load_split(path: str) -> DatasetSplit:
    """Split file: {"train": [manifest paths], "test": [...]} relative to
    the split file's directory."""
    if not os.path.exists(path):
        raise InputError(f"split file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "train" not in doc or "test" not in doc:
        raise ValidationError(f"{path}: split must map 'train' and 'test' lists")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    return DatasetSplit(
        train=[load_manifest(resolve(p)) for p in doc["train"]],
        test=[load_manifest(resolve(p)) for p in doc["test"]],
    )


def save_split(path: str, train_paths: list, test_paths: list) -> None:
    with open(path, "w") as fh:
        json.dump({"train": train_paths, "test": test_paths}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


# --- synthetic bundles -------------------------------------------------------

def plant_row(title: np.ndarray, description: np.ndarray,
              audio_mean: np.ndarray) -> np.ndarray:
    """Deterministic 512-dim target row derived from the other modalities:
    half title, half description, mixed with the group-averaged audio mean."""
    g = np.concatenate([title[:256], description[:256]])
    a = audio_mean.reshape(512, 4).mean(axis=1)
    return np.tanh(g + a)


def synth_bundle(seed: int, n_frames: int = 12, n_audio: int = 6,
                 planted_truth: bool = True) -> FeatureBundle:
    """Seeded pseudo-random features. With ``planted_truth`` the ground-truth
    frame row is a deterministic function of the title, description, and mean
    audio, so the selection task is learnable."""
    if n_frames < 1 or n_audio < 1:
        raise InputError("need at least one frame row and one audio row")
    rng = np.random.default_rng(seed)
    frames = rng.standard_normal((n_frames, 512)) * 0.5
    audio = rng.standard_normal((n_audio, 2048)) * 0.5
    title = rng.standard_normal(768) * 0.5
    description = rng.standard_normal(768) * 0.5
    gt_index = None
    if planted_truth:
        gt_index = int(rng.integers(0, n_frames))
        frames[gt_index] = plant_row(title, description, audio.mean(axis=0))
    return FeatureBundle(frames=Tensor(frames), audio=Tensor(audio),
                         title=Tensor(title), description=Tensor(description),
                         ground_truth_index=gt_index)


def write_synth_dataset(out_dir: str, n_videos: int, n_test: int, seed: int,
                        n_frames: int = 12, n_audio: int = 6,
                        planted_truth: bool = True) -> str:
    """Write a synthetic dataset (tensor files, manifests, split.json) under
    ``out_dir`` and return the split file path."""
    if n_videos < 1 or not 0 <= n_test < n_videos:
        raise InputError("need n_videos >= 1 and 0 <= n_test < n_videos")
    tensors_dir = os.path.join(out_dir, "tensors")
    manifests_dir = os.path.join(out_dir, "manifests")
    os.makedirs(tensors_dir, exist_ok=True)
    os.makedirs(manifests_dir, exist_ok=True)
    manifest_paths = []
    for i in range(n_videos):
        bundle = synth_bundle(seed + i, n_frames=n_frames, n_audio=n_audio,
                              planted_truth=planted_truth)
        vid = f"synth{i:04d}"
        rels = {}
        for name, tensor in (("frames", bundle.frames), ("audio", bundle.audio),
                             ("title", bundle.title),
                             ("description", bundle.description)):
            rel = os.path.join("..", "tensors", f"{vid}_{name}.tft")
            write_tensor(os.path.join(tensors_dir, f"{vid}_{name}.tft"), tensor)
            rels[name] = rel
        manifest = VideoManifest(video_id=vid, feature_paths=rels,
                                 category="Synthetic",
                                 ground_truth_index=bundle.ground_truth_index)
        mpath = os.path.join(manifests_dir, f"{vid}.json")
        save_manifest(mpath, manifest)
        manifest_paths.append(os.path.join("manifests", f"{vid}.json"))
    split_path = os.path.join(out_dir, "split.json")
    save_split(split_path, manifest_paths[:n_videos - n_test],
               manifest_paths[n_videos - n_test:] if n_test else [])
    return split_path


# --- checkpoints -------------------------------------------------------------

INDEX_NAME = "index.json"


def save_checkpoint(directory: str, model_kind: str, params: dict,
                    config: dict, extra: Optional[dict] = None) -> None:
    """Write one tensor file per named parameter plus a JSON index carrying
    the model kind and its configuration."""
    os.makedirs(directory, exist_ok=True)
    index = {"format_version": 1, "model": model_kind, "config": config,
             "tensors": {}, "extra_tensors": {}}
    for name, tensor in sorted(params.items()):
        fname = name.replace("/", "_") + ".tft"
        write_tensor(os.path.join(directory, fname), tensor)
        index["tensors"][name] = fname
    for name, arr in sorted((extra or {}).items()):
        fname = "extra__" + name.replace("/", "_") + ".tft"
        write_tensor(os.path.join(directory, fname), np.asarray(arr))
        index["extra_tensors"][name] = fname
    with open(os.path.join(directory, INDEX_NAME), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory: str):
    """Read a checkpoint directory back as (model_kind, params, config,
    extra arrays)."""
    index_path = os.path.join(directory, INDEX_NAME)
    if not os.path.exists(index_path):
        raise CheckpointError(f"no checkpoint index at {index_path}")
    with open(index_path) as fh:
        try:
            index = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{index_path}: invalid JSON") from exc
    if index.get("format_version") != 1:
        raise CheckpointError(
            f"{index_path}: unsupported format_version {index.get('format_version')}")
    params = {}
    try:
        for name, fname in index.get("tensors", {}).items():
            fpath = os.path.join(directory, fname)
            if not os.path.exists(fpath):
                raise CheckpointError(f"checkpoint tensor missing: {fpath}")
            params[name] = read_tensor(fpath)
        extra = {}
        for name, fname in index.get("extra_tensors", {}).items():
            extra[name] = read_tensor(os.path.join(directory, fname)).data
    except (TensorFormatError, TensorCorruptionError) as exc:
        raise CheckpointError(f"unreadable checkpoint tensor: {exc}") from exc
    return index.get("model"), params, index.get("config", {}), extra


def restore_fusion_net(directory: str):
    """Rebuild a FusionNet from a checkpoint directory."""
    from .fusion import FusionNet

    kind, params, config, _ = load_checkpoint(directory)
    if kind != "fusion":
        raise CheckpointError(f"{directory}: checkpoint is for model {kind!r}, "
                              f"not fusion")
    try:
        net = FusionNet(FusionConfig.from_dict(config))
    except TypeError as exc:
        raise CheckpointError(f"{directory}: bad fusion config ({exc})") from exc
    _load_params_into(net, params, directory)
    return net


def restore_filter_net(directory: str):
    """Rebuild a FilterNet from a checkpoint directory."""
    from .filter import FilterConfig, FilterNet

    kind, params, config, _ = load_checkpoint(directory)
    if kind != "filter":
        raise CheckpointError(f"{directory}: checkpoint is for model {kind!r}, "
                              f"not filter")
    try:
        net = FilterNet(FilterConfig(**config))
    except TypeError as exc:
        raise CheckpointError(f"{directory}: bad filter config ({exc})") from exc
    _load_params_into(net, params, directory)
    return net


def _load_params_into(net, params: dict, directory: str) -> None:
    own = dict(net.parameters())
    if set(own) != set(params):
        missing = sorted(set(own) - set(params))
        surplus = sorted(set(params) - set(own))
        raise CheckpointError(
            f"{directory}: parameter names do not match the model "
            f"(missing {missing[:3]}, surplus {surplus[:3]})")
    for name, tensor in own.items():
        stored = params[name]
        if stored.shape != tensor.shape:
            raise CheckpointError(
                f"{directory}: parameter {name} has shape {stored.shape}, "
                f"model expects {tensor.shape}")
        tensor.data = stored.data.astype(tensor.data.dtype)
