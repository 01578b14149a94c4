"""Operator surface: score frames, build synthetic bundles, train, select,
evaluate, and run the depth ablation.

Every subcommand prints its resolved configuration (seeds included) before
doing work, so a run can be reproduced from its log alone. Exit codes are a
stable contract: 0 success, 2 invalid input, 3 checkpoint/state mismatch.
Timing goes to stderr so repeated runs produce byte-identical stdout and
files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data_io, evaluation, filter as flt, fusion, training
from .errors import (
    CheckpointError,
    DimensionError,
    InputError,
    TensorCorruptionError,
    TensorFormatError,
    ThumbforgeError,
    UsageError,
)
from .images import read_image
from .tensor import Tensor, no_grad

SEED_ENV = "THUMBFORGE_SEED"


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def print_config(cmd: str, args: argparse.Namespace) -> None:
    skip = {"func", "cmd"}
    pairs = [f"{k.replace('_', '-')}={v}" for k, v in sorted(vars(args).items())
             if k not in skip and v is not None]
    print(f"config: command={cmd} " + " ".join(pairs))


def _parse_thetas(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad theta list {text!r}") from exc


def _write_rows(path, header, rows) -> None:
    out = sys.stdout if path is None else open(path, "w", newline="")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path is not None:
            out.close()


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    args.seed = seed
    print_config("synth", args)
    split_path = data_io.write_synth_dataset(
        args.out, n_videos=args.videos, n_test=args.test, seed=seed,
        n_frames=args.frames, n_audio=args.audio,
        planted_truth=not args.unplanted)
    if args.frame_images:
        frames_dir = os.path.join(args.out, "frames")
        os.makedirs(frames_dir, exist_ok=True)
        images, _ = flt.synth_aesthetic_dataset(args.frame_images,
                                                size=args.frame_size, seed=seed)
        from .images import write_ppm
        for i, img in enumerate(images):
            write_ppm(os.path.join(frames_dir, f"frame_{i:05d}.ppm"), img)
    print(f"split: {split_path}")
    return 0


def cmd_sample(args) -> int:
    print_config("sample", args)
    names = sorted(n for n in os.listdir(args.frames)
                   if n.lower().endswith((".ppm", ".png")))
    if not names:
        raise InputError(f"no frames in {args.frames}")
    ids = [flt.parse_frame_id(n) if flt.parse_frame_id(n) is not None else i
           for i, n in enumerate(names)]
    order = np.argsort(np.asarray(ids), kind="stable")
    kept = order[::args.stride] if args.stride > 1 else order
    rows = [[int(ids[i]), names[i]] for i in kept]
    _write_rows(args.out, ["frame_id", "filename"], rows)
    return 0


def _score_one(frame, frame_id, net):
    with no_grad():
        views = flt.make_views(frame, net.config.view_size,
                               flt.frame_crop_seed(net.config.crop_seed, frame_id))
        return flt.dcnn_score(views, net).item()


def cmd_score_frames(args) -> int:
    args.seed = resolve_seed(args.seed)
    print_config("score-frames", args)
    net = data_io.restore_filter_net(args.filter_checkpoint)
    warnings = []

    def note(name, exc):
        warnings.append(name)
        print(f"warning: skipped {name}: {exc}", file=sys.stderr)

    seq = flt.load_frames(args.frames, on_error=note)
    seq = flt.sample_frames(seq, stride=args.stride)
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            scores = list(pool.map(lambda p: _score_one(p[0], p[1], net),
                                   zip(seq.frames, seq.indices)))
    else:
        scores = [_score_one(f, i, net) for f, i in zip(seq.frames, seq.indices)]
    scores = np.asarray(scores)
    keep = set(flt.select_top_k(scores, seq.indices, args.top_k).tolist())
    rows = [[idx, repr(float(s)), int(pos in keep)]
            for pos, (idx, s) in enumerate(zip(seq.indices, scores))]
    _write_rows(args.out, ["frame_id", "score", "kept"], rows)
    print(f"scored {len(rows)} frames ({len(warnings)} warnings)",
          file=sys.stderr)
    return 0


def cmd_train_filter(args) -> int:
    seed = resolve_seed(args.seed)
    args.seed = seed
    print_config("train-filter", args)
    if args.synthetic:
        images, labels = flt.synth_aesthetic_dataset(args.synthetic,
                                                     size=args.view_size,
                                                     seed=seed)
        scores = [flt.ava_weighted_mean(l) for l in labels]
    else:
        if not args.images or not args.labels:
            raise UsageError("provide --synthetic N, or --images with --labels")
        table = flt.load_ava_csv(args.labels)
        images, scores = [], []
        for image_id, label in sorted(table.items()):
            path = os.path.join(args.images, image_id)
            if not os.path.exists(path):
                raise InputError(f"labelled image missing: {path}")
            images.append(read_image(path))
            scores.append(flt.ava_weighted_mean(label))
    n_val = int(len(images) * args.val_fraction)
    cut = len(images) - n_val
    split = flt.FilterSplit(images[:cut], scores[:cut], images[cut:],
                            scores[cut:])
    config = training.TrainConfig(
        model="filter", epochs=args.epochs, lr=args.lr, seed=seed,
        checkpoint_dir=args.checkpoint, filter_depth=args.depth,
        view_size=args.view_size, crop_seed=args.crop_seed,
        save_optimizer_state=not args.no_opt_state)
    result = training.run_training(config, split)
    for epoch, (tr, va) in enumerate(zip(result.train_losses,
                                         result.val_losses), 1):
        print(f"epoch {epoch}: train_mse={tr:.6f} val_mse={va:.6f}")
    print(f"best epoch: {result.best_epoch}")
    return 0


def cmd_train_fusion(args) -> int:
    seed = resolve_seed(args.seed)
    args.seed = seed
    print_config("train-fusion", args)
    split = data_io.load_split(args.dataset)
    config = training.TrainConfig(
        model="fusion", epochs=args.epochs, lr=args.lr, seed=seed,
        checkpoint_dir=args.checkpoint, dtype=args.dtype,
        use_pe=not args.no_pe, save_optimizer_state=not args.no_opt_state)
    result = training.run_training(config, split)
    for epoch, (tr, va) in enumerate(zip(result.train_losses,
                                         result.val_losses), 1):
        print(f"epoch {epoch}: train_mse={tr:.6f} val_mse={va:.6f}")
    print(f"best epoch: {result.best_epoch}")
    return 0


def cmd_select(args) -> int:
    args.seed = resolve_seed(args.seed)
    print_config("select", args)
    net = data_io.restore_fusion_net(args.checkpoint)
    manifest = data_io.load_manifest(args.manifest)
    bundle = data_io.load_bundle(manifest)
    k = min(args.top_k, bundle.n_frames)
    if k < 1:
        raise UsageError("--top-k must keep at least one frame")
    candidates = bundle.frames.data[:k]
    ids = bundle.frame_ids[:k]
    try:
        with no_grad():
            latent = fusion.fuse_features(net, Tensor(candidates),
                                          bundle.audio, bundle.title,
                                          bundle.description)
    except DimensionError as exc:
        raise CheckpointError(
            f"checkpoint configuration does not fit this bundle: {exc}") from exc
    result = fusion.select_thumbnail(latent.data, candidates, ids)
    print(result.selected_frame_id)
    if args.emit_ranking:
        doc = {"video_id": manifest.video_id,
               "selected_frame_id": result.selected_frame_id,
               "ranking": [[fid, d] for fid, d in result.ranking]}
        with open(args.emit_ranking, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _eval_pair(manifest, net, space: str, resolution: int):
    bundle = data_io.load_bundle(manifest)
    with no_grad():
        latent = fusion.forward(bundle, net)
    picked = fusion.select_thumbnail(latent.data, bundle.frames.data,
                                     bundle.frame_ids)
    sel = picked.selected_frame_id
    if space == "feature":
        if manifest.ground_truth_index is None:
            raise InputError(
                f"{manifest.video_id}: feature-space evaluation needs a "
                f"ground-truth frame index")
        pos = int(np.nonzero(bundle.frame_ids == sel)[0][0])
        return (bundle.frames.data[pos],
                bundle.frames.data[manifest.ground_truth_index])
    if not manifest.frames_dir:
        raise InputError(
            f"{manifest.video_id}: pixel-space evaluation needs frames_dir")
    cand_img = _frame_image(manifest.frames_dir, sel)
    if manifest.ground_truth_image:
        gt_img = read_image(manifest.ground_truth_image)
    elif manifest.ground_truth_index is not None:
        gt_img = _frame_image(manifest.frames_dir,
                              int(bundle.frame_ids[manifest.ground_truth_index]))
    else:
        raise InputError(f"{manifest.video_id}: no ground truth available")
    return cand_img, gt_img


def _frame_image(frames_dir: str, frame_id: int):
    for name in sorted(os.listdir(frames_dir)):
        if flt.parse_frame_id(name) == frame_id:
            return read_image(os.path.join(frames_dir, name))
    raise InputError(f"frame id {frame_id} not found in {frames_dir}")


def cmd_eval(args) -> int:
    args.seed = resolve_seed(args.seed)
    print_config("eval", args)
    thetas = _parse_thetas(args.theta)
    split = data_io.load_split(args.dataset)
    if not split.test:
        raise InputError(f"{args.dataset}: empty test list")
    net = data_io.restore_fusion_net(args.checkpoint)
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            pairs = list(pool.map(
                lambda m: _eval_pair(m, net, args.space, args.resolution),
                split.test))
    else:
        pairs = [_eval_pair(m, net, args.space, args.resolution)
                 for m in split.test]
    report = evaluation.precision_at(pairs, thetas, space=args.space,
                                     resolution=args.resolution)
    print(report.to_text())
    if args.out:
        report.save_json(args.out)
    return 0


def cmd_ablate_depth(args) -> int:
    seed = resolve_seed(args.seed)
    args.seed = seed
    print_config("ablate-depth", args)
    depths = [int(d) for d in args.depths.split(",")]
    images, labels = flt.synth_aesthetic_dataset(args.images, size=args.size,
                                                 seed=seed)
    report = flt.ablate_depth(images, labels, depths=depths,
                              epochs=args.epochs, seed=seed, lr=args.lr)
    print(report.to_text())
    if args.out_csv:
        rows = []
        for row in report.rows:
            for epoch, mse in enumerate(row.val_mse, 1):
                rows.append([row.depth, epoch, repr(mse)])
        _write_rows(args.out_csv, ["depth", "epoch", "val_mse"], rows)
    for row in report.rows:
        if row.val_mse[-1] >= report.baseline_mse:
            print(f"note: depth {row.depth} did not beat the baseline",
                  file=sys.stderr)
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thumbforge",
        description="Multimodal video thumbnail selection pipeline")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="write a synthetic feature dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=8)
    p.add_argument("--test", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=12,
                   help="frame rows per video")
    p.add_argument("--audio", type=int, default=6, help="audio rows per video")
    p.add_argument("--unplanted", action="store_true",
                   help="skip planting a learnable ground-truth row")
    p.add_argument("--frame-images", type=int, default=0,
                   help="also write this many PPM frames under out/frames")
    p.add_argument("--frame-size", type=int, default=32)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="subsample a frames directory by stride")
    p.add_argument("--frames", required=True)
    p.add_argument("--stride", type=int, default=9)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score-frames",
                       help="score frame aesthetics and mark the top k")
    p.add_argument("--frames", required=True,
                   help="frames directory, or one (N,H,W,3) .tft stack")
    p.add_argument("--filter-checkpoint", required=True)
    p.add_argument("--stride", type=int, default=9)
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_score_frames)

    p = sub.add_parser("train-filter", help="train the aesthetic filter")
    p.add_argument("--synthetic", type=int, default=0,
                   help="train on N synthetic images")
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None, help="AVA-style CSV")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--crop-seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--view-size", type=int, default=32)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--no-opt-state", action="store_true")
    p.set_defaults(func=cmd_train_filter)

    p = sub.add_parser("train-fusion", help="train the fusion selector")
    p.add_argument("--dataset", required=True, help="split.json")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dtype", choices=("float32", "float64"),
                   default="float64")
    p.add_argument("--no-pe", action="store_true",
                   help="disable positional encoding")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--no-opt-state", action="store_true")
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("select", help="select a thumbnail for one video")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=1000,
                   help="restrict candidates to the first k frame rows")
    p.add_argument("--emit-ranking", default=None, help="ranking JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="Precision@theta over a test split")
    p.add_argument("--dataset", required=True, help="split.json")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", default="500,750,1000")
    p.add_argument("--space", choices=evaluation.SPACES, default="feature")
    p.add_argument("--resolution", type=int, default=224)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-depth",
                       help="depth ablation on synthetic aesthetic images")
    p.add_argument("--images", type=int, default=2000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--depths", default="2,3,4")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=cmd_ablate_depth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, UsageError, DimensionError, TensorFormatError,
            TensorCorruptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ThumbforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
