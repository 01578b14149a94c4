"""CLI behavior: subcommand contracts, exit codes, reproducible outputs."""

import json
import os

import numpy as np
import pytest

from thumbforge import cli
from thumbforge.data_io import load_split, synth_bundle
from thumbforge.images import write_ppm
from thumbforge.tensor import active_tape


@pytest.fixture(autouse=True)
def fresh_tape():
    active_tape().clear()
    yield
    active_tape().clear()


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synthetic dataset, a tiny filter checkpoint, and an overfit fusion
    checkpoint shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data"
    assert cli.main(["synth", "--out", str(data), "--videos", "2", "--test",
                     "1", "--seed", "7", "--frames", "4", "--audio", "2",
                     "--frame-images", "20", "--frame-size", "16"]) == 0
    filter_ck = root / "filter_ck"
    assert cli.main(["train-filter", "--synthetic", "24", "--view-size", "16",
                     "--epochs", "1", "--seed", "1", "--checkpoint",
                     str(filter_ck), "--no-opt-state"]) == 0
    fusion_ck = root / "fusion_ck"
    assert cli.main(["train-fusion", "--dataset", str(data / "split.json"),
                     "--epochs", "30", "--lr", "3e-3", "--dtype", "float32",
                     "--seed", "3", "--checkpoint", str(fusion_ck),
                     "--no-opt-state"]) == 0
    return {"root": root, "data": data, "split": data / "split.json",
            "filter_ck": filter_ck / "best", "fusion_ck": fusion_ck / "best",
            "frames": data / "frames"}


class TestSynthAndSample(object):
    def test_synth_dataset_loads(self, workspace):
        split = load_split(str(workspace["split"]))
        assert len(split.train) == 1 and len(split.test) == 1
        assert len(list(workspace["frames"].glob("*.ppm"))) == 20

    def test_sample_stride(self, workspace, capsys, tmp_path):
        out = tmp_path / "sample.csv"
        code, _, _ = run(capsys, "sample", "--frames", str(workspace["frames"]),
                         "--stride", "9", "--out", str(out))
        assert code == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "frame_id,filename"
        assert [r.split(",")[0] for r in rows[1:]] == ["0", "9", "18"]


class TestScoreFrames:
    def test_stride_and_rows(self, workspace, capsys, tmp_path):
        out = tmp_path / "scores.csv"
        code, stdout, stderr = run(
            capsys, "score-frames", "--frames", str(workspace["frames"]),
            "--filter-checkpoint", str(workspace["filter_ck"]),
            "--stride", "9", "--top-k", "1000", "--out", str(out))
        assert code == 0
        assert "config: command=score-frames" in stdout
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "frame_id,score,kept"
        assert len(rows) == 1 + 3  # 20 frames at stride 9
        assert all(r.endswith(",1") for r in rows[1:])  # top-k >= rows
        assert "0 warnings" in stderr

    def test_rerun_identical_bytes(self, workspace, capsys, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{tag}.csv"
            code, _, _ = run(
                capsys, "score-frames", "--frames", str(workspace["frames"]),
                "--filter-checkpoint", str(workspace["filter_ck"]),
                "--out", str(out))
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_unreadable_frame_warns_and_skips(self, workspace, capsys,
                                              tmp_path):
        frames = tmp_path / "frames"
        frames.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            write_ppm(frames / f"frame_{i}.ppm", rng.uniform(0, 1, (16, 16, 3)))
        (frames / "frame_3.ppm").write_bytes(b"P6 broken")
        out = tmp_path / "scores.csv"
        code, _, stderr = run(
            capsys, "score-frames", "--frames", str(frames),
            "--filter-checkpoint", str(workspace["filter_ck"]),
            "--stride", "1", "--out", str(out))
        assert code == 0
        assert "1 warnings" in stderr
        assert len(out.read_text().strip().splitlines()) == 1 + 3

    def test_jobs_flag_does_not_change_bytes(self, workspace, capsys,
                                             tmp_path):
        serial = tmp_path / "serial.csv"
        parallel = tmp_path / "parallel.csv"
        run(capsys, "score-frames", "--frames", str(workspace["frames"]),
            "--filter-checkpoint", str(workspace["filter_ck"]),
            "--stride", "1", "--out", str(serial))
        run(capsys, "score-frames", "--frames", str(workspace["frames"]),
            "--filter-checkpoint", str(workspace["filter_ck"]),
            "--stride", "1", "--jobs", "2", "--out", str(parallel))
        assert serial.read_bytes() == parallel.read_bytes()


class TestSelect:
    def test_overfit_checkpoint_picks_planted_frame(self, workspace, capsys):
        manifest = workspace["data"] / "manifests" / "synth0000.json"
        code, stdout, _ = run(capsys, "select", "--manifest", str(manifest),
                              "--checkpoint", str(workspace["fusion_ck"]))
        assert code == 0
        planted = synth_bundle(7, n_frames=4, n_audio=2).ground_truth_index
        assert stdout.strip().splitlines()[-1] == str(planted)

    def test_missing_manifest_exit_2(self, workspace, capsys):
        code, _, stderr = run(capsys, "select", "--manifest", "/no/such.json",
                              "--checkpoint", str(workspace["fusion_ck"]))
        assert code == 2
        assert "/no/such.json" in stderr

    def test_filter_checkpoint_rejected_exit_3(self, workspace, capsys):
        manifest = workspace["data"] / "manifests" / "synth0000.json"
        code, _, _ = run(capsys, "select", "--manifest", str(manifest),
                         "--checkpoint", str(workspace["filter_ck"]))
        assert code == 3

    def test_top_k_one_selects_first_row(self, workspace, capsys):
        manifest = workspace["data"] / "manifests" / "synth0000.json"
        code, stdout, _ = run(capsys, "select", "--manifest", str(manifest),
                              "--checkpoint", str(workspace["fusion_ck"]),
                              "--top-k", "1")
        assert code == 0
        assert stdout.strip().splitlines()[-1] == "0"

    def test_ranking_json(self, workspace, capsys, tmp_path):
        manifest = workspace["data"] / "manifests" / "synth0000.json"
        ranking = tmp_path / "ranking.json"
        code, _, _ = run(capsys, "select", "--manifest", str(manifest),
                         "--checkpoint", str(workspace["fusion_ck"]),
                         "--emit-ranking", str(ranking))
        assert code == 0
        doc = json.loads(ranking.read_text())
        assert doc["video_id"] == "synth0000"
        assert len(doc["ranking"]) == 4
        dists = [d for _, d in doc["ranking"]]
        assert dists == sorted(dists)


class TestEval:
    def test_feature_space_report(self, workspace, capsys, tmp_path):
        out = tmp_path / "report.json"
        code, stdout, _ = run(capsys, "eval", "--dataset",
                              str(workspace["split"]), "--checkpoint",
                              str(workspace["fusion_ck"]), "--theta",
                              "1.0,0.5,2.0", "--space", "feature",
                              "--out", str(out))
        assert code == 0
        doc = json.loads(out.read_text())
        assert [r["theta"] for r in doc["rows"]] == [0.5, 1.0, 2.0]
        precisions = [r["precision"] for r in doc["rows"]]
        assert precisions == sorted(precisions)
        assert "Precision @ theta" in stdout

    def test_empty_test_list_exit_2(self, workspace, capsys, tmp_path):
        bad = tmp_path / "empty.json"
        bad.write_text(json.dumps({"train": [], "test": []}))
        code, _, _ = run(capsys, "eval", "--dataset", str(bad),
                         "--checkpoint", str(workspace["fusion_ck"]))
        assert code == 2

    def test_malformed_split_exit_2(self, workspace, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        code, _, _ = run(capsys, "eval", "--dataset", str(bad),
                         "--checkpoint", str(workspace["fusion_ck"]))
        assert code == 2

    def test_jobs_flag_matches_serial_report(self, workspace, capsys,
                                             tmp_path):
        serial, parallel = tmp_path / "s.json", tmp_path / "p.json"
        run(capsys, "eval", "--dataset", str(workspace["split"]),
            "--checkpoint", str(workspace["fusion_ck"]), "--theta", "1.0",
            "--out", str(serial))
        run(capsys, "eval", "--dataset", str(workspace["split"]),
            "--checkpoint", str(workspace["fusion_ck"]), "--theta", "1.0",
            "--jobs", "2", "--out", str(parallel))
        assert serial.read_bytes() == parallel.read_bytes()

    def test_score_frames_from_tensor_stack(self, workspace, capsys,
                                            tmp_path):
        from thumbforge.data_io import write_tensor
        stack = np.random.default_rng(3).uniform(0, 1, (5, 16, 16, 3))
        path = tmp_path / "stack.tft"
        write_tensor(path, stack)
        out = tmp_path / "scores.csv"
        code, _, _ = run(capsys, "score-frames", "--frames", str(path),
                         "--filter-checkpoint", str(workspace["filter_ck"]),
                         "--stride", "1", "--out", str(out))
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 1 + 5


class TestArgHandling:
    def test_unknown_flag_exit_2(self, capsys):
        assert cli.main(["select", "--bogus", "x"]) == 2
        capsys.readouterr()

    def test_seed_env_override(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("THUMBFORGE_SEED", "99")
        code, stdout, _ = run(capsys, "synth", "--out", str(tmp_path / "d"),
                              "--videos", "1", "--test", "0")
        assert code == 0
        assert "seed=99" in stdout

    def test_ablate_depth_small(self, capsys, tmp_path):
        out = tmp_path / "ablate.csv"
        code, stdout, _ = run(capsys, "ablate-depth", "--images", "20",
                              "--size", "16", "--depths", "2", "--epochs", "1",
                              "--seed", "2", "--out-csv", str(out))
        assert code == 0
        assert "2-block" in stdout
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "depth,epoch,val_mse"
        assert len(rows) == 2
