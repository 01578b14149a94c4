"""Aesthetic filter tests: sampling, labels, views, scoring net structure,
top-k selection, synthetic data."""

import numpy as np
import numpy.testing as npt
import pytest

from thumbforge import filter as flt
from thumbforge.errors import InputError, InvalidLabelError, UsageError
from thumbforge.gradcheck import check_gradients
from thumbforge.tensor import Tensor, active_tape


@pytest.fixture(autouse=True)
def fresh_tape():
    active_tape().clear()
    yield
    active_tape().clear()


def make_seq(n, h=6, w=6, seed=0):
    rng = np.random.default_rng(seed)
    return flt.FrameSequence([rng.uniform(0, 1, (h, w, 3)) for _ in range(n)],
                             list(range(n)))


class TestSampleFrames:
    def test_ninety_frames_stride_nine(self):
        out = flt.sample_frames(make_seq(90), stride=9)
        assert len(out) == 10
        assert out.indices == [0, 9, 18, 27, 36, 45, 54, 63, 72, 81]

    def test_stride_one_identity(self):
        seq = make_seq(7)
        out = flt.sample_frames(seq, stride=1)
        assert out.indices == seq.indices

    def test_short_sequence(self):
        out = flt.sample_frames(make_seq(5), stride=9)
        assert len(out) == 1 and out.indices == [0]

    def test_length_is_ceil(self):
        for n in (1, 8, 9, 10, 27, 28):
            out = flt.sample_frames(make_seq(n), stride=9)
            assert len(out) == -(-n // 9)
            assert all(i % 9 == 0 for i in out.indices)

    def test_empty_sequence(self):
        out = flt.sample_frames(flt.FrameSequence([], []), stride=9)
        assert len(out) == 0

    def test_bad_stride(self):
        with pytest.raises(UsageError):
            flt.sample_frames(make_seq(3), stride=0)


class TestAvaLabels:
    def test_point_mass(self):
        hist = np.zeros(10)
        hist[6] = 12  # all votes on score 7
        assert flt.ava_weighted_mean(flt.AvaLabel(hist)) == 7.0

    def test_uniform(self):
        assert flt.ava_weighted_mean(flt.AvaLabel(np.ones(10))) == 5.5

    def test_weighted(self):
        hist = np.zeros(10)
        hist[4], hist[7] = 3, 1  # scores 5 and 8
        assert flt.ava_weighted_mean(flt.AvaLabel(hist)) == 5.75

    def test_empty_histogram_rejected(self):
        with pytest.raises(InvalidLabelError):
            flt.ava_weighted_mean(flt.AvaLabel(np.zeros(10)))

    def test_always_in_range(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            label = flt.AvaLabel(rng.integers(0, 20, size=10) + 1)
            assert 1.0 <= flt.ava_weighted_mean(label) <= 10.0

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("image_id," + ",".join(f"count_{i}" for i in range(1, 11))
                        + "\nimg1,0,0,0,0,3,0,0,1,0,0\n")
        labels = flt.load_ava_csv(path)
        assert flt.ava_weighted_mean(labels["img1"]) == 5.75


class TestMakeViews:
    def test_exact_size_is_identity(self):
        frame = np.random.default_rng(5).uniform(0, 1, (8, 8, 3))
        views = flt.make_views(frame, 8, crop_seed=1)
        npt.assert_array_equal(views.global_view, frame)
        npt.assert_array_equal(views.local_view, frame)

    def test_anisotropic_global_view(self):
        frame = np.zeros((4, 2, 3))
        for r in range(4):
            for c in range(2):
                frame[r, c, :] = r * 2 + c
        views = flt.make_views(frame, 2, crop_seed=0)
        npt.assert_allclose(views.global_view[..., 0], [[1.0, 2.0], [5.0, 6.0]],
                            atol=1e-12)

    def test_crop_seed_determinism(self):
        frame = np.random.default_rng(6).uniform(0, 1, (20, 30, 3))
        a = flt.make_views(frame, 8, crop_seed=42)
        b = flt.make_views(frame, 8, crop_seed=42)
        npt.assert_array_equal(a.local_view, b.local_view)

    def test_small_frame_upscaled_before_crop(self):
        frame = np.random.default_rng(7).uniform(0, 1, (4, 4, 3))
        views = flt.make_views(frame, 8, crop_seed=0)
        assert views.local_view.shape == (8, 8, 3)

    def test_degenerate_frame(self):
        with pytest.raises(InputError):
            flt.make_views(np.ones((0, 4, 3)), 4, crop_seed=0)


class TestFilterNet:
    def test_production_structure(self):
        net = flt.FilterNet()
        desc = net.describe()
        assert desc["global"] == ["conv", "maxpool", "conv", "dense"]
        assert desc["local"] == ["conv", "maxpool", "conv", "dense"]

    def test_candidate_structure_pools_every_block(self):
        net = flt.FilterNet(flt.FilterConfig(depth=3, candidate_layout=True))
        assert net.describe()["global"] == [
            "conv", "maxpool", "conv", "maxpool", "conv", "maxpool", "dense"]

    def test_parameter_inventory(self):
        net = flt.FilterNet()
        params = dict(net.parameters())
        want = {}
        for col in ("global", "local"):
            want[f"{col}.conv0.kernel"] = (3, 3, 3, 16)
            want[f"{col}.conv0.bias"] = (16,)
            want[f"{col}.conv1.kernel"] = (3, 3, 16, 32)
            want[f"{col}.conv1.bias"] = (32,)
            want[f"{col}.proj.weight"] = (32, 64)
            want[f"{col}.proj.bias"] = (64,)
        want["head.weight"] = (128, 1)
        want["head.bias"] = (1,)
        assert {k: v.shape for k, v in params.items()} == want
        assert not any("norm" in k or "bn" in k for k in params)

    def test_column_outputs_are_64(self):
        net = flt.FilterNet(flt.FilterConfig(view_size=8))
        x = Tensor(np.random.default_rng(8).uniform(0, 1, (8, 8, 3)))
        assert net.global_column(x).shape == (64,)


class TestDcnnScore:
    def test_zero_weights_give_bias(self):
        net = flt.FilterNet(flt.FilterConfig(view_size=8))
        for _, p in net.parameters():
            p.data[...] = 0.0
        net.head.bias.data[...] = 3.25
        frame = np.random.default_rng(9).uniform(0, 1, (8, 8, 3))
        views = flt.make_views(frame, 8, crop_seed=0)
        assert flt.dcnn_score(views, net).item() == 3.25

    def test_deterministic(self):
        net = flt.FilterNet(flt.FilterConfig(view_size=8, seed=3))
        frame = np.random.default_rng(10).uniform(0, 1, (8, 8, 3))
        views = flt.make_views(frame, 8, crop_seed=5)
        assert flt.dcnn_score(views, net).item() == flt.dcnn_score(views, net).item()

    def test_size_mismatch(self):
        net = flt.FilterNet(flt.FilterConfig(view_size=8))
        frame = np.random.default_rng(11).uniform(0, 1, (16, 16, 3))
        views = flt.make_views(frame, 16, crop_seed=0)
        with pytest.raises(InputError):
            flt.dcnn_score(views, net)

    def test_parameter_gradients(self):
        net = flt.FilterNet(flt.FilterConfig(view_size=8, seed=1))
        frame = np.random.default_rng(12).uniform(0, 1, (8, 8, 3))
        views = flt.make_views(frame, 8, crop_seed=0)
        params = [p for _, p in net.parameters()]
        err = check_gradients(lambda ts: flt.dcnn_score(views, net), params,
                              seed=12, max_coords=6)
        assert err < 1e-4

    def test_overfits_ten_pairs(self):
        from thumbforge.training import TrainConfig, train_filter
        images, labels = flt.synth_aesthetic_dataset(10, size=16, seed=8)
        scores = [flt.ava_weighted_mean(l) for l in labels]
        split = flt.FilterSplit(images, scores, images, scores)
        result = train_filter(TrainConfig(model="filter", epochs=300, lr=1e-3,
                                          seed=8, view_size=16), split)
        # val here is a static pass over the training pairs themselves
        assert min(result.val_losses) < 0.01


class TestTopK:
    def test_whole_sequence_when_k_large(self):
        seq = make_seq(5)
        net = flt.FilterNet(flt.FilterConfig(view_size=8))
        out = flt.top_k_frames(seq, net, k=10)
        assert out.indices == seq.indices

    def test_selection_with_ties(self):
        keep = flt.select_top_k(np.array([3.0, 9.0, 1.0, 9.0, 5.0]),
                                [0, 1, 2, 3, 4], k=2)
        assert list(keep) == [1, 3]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(13)
        scores = rng.choice(np.linspace(0, 1, 40), size=500)  # forces ties
        indices = np.arange(500)
        for k in (1, 7, 100, 499):
            keep = flt.select_top_k(scores, indices, k)
            ranked = sorted(range(500), key=lambda i: (-scores[i], indices[i]))
            want = sorted(ranked[:k])
            assert list(keep) == want
            kept_scores = sorted(scores[keep], reverse=True)
            all_sorted = sorted(scores, reverse=True)
            npt.assert_array_equal(kept_scores, all_sorted[:k])


class TestSyntheticDataset:
    def test_reproducible(self):
        a_imgs, a_labels = flt.synth_aesthetic_dataset(5, size=8, seed=3)
        b_imgs, b_labels = flt.synth_aesthetic_dataset(5, size=8, seed=3)
        for x, y in zip(a_imgs, b_imgs):
            npt.assert_array_equal(x, y)
        for x, y in zip(a_labels, b_labels):
            npt.assert_array_equal(x.histogram, y.histogram)

    def test_brightness_tracks_score(self):
        images, labels = flt.synth_aesthetic_dataset(200, size=8, seed=4)
        scores = np.array([flt.ava_weighted_mean(l) for l in labels])
        brightness = np.array([img.mean() for img in images])
        corr = np.corrcoef(scores, brightness)[0, 1]
        assert corr > 0.9

    def test_labels_valid(self):
        _, labels = flt.synth_aesthetic_dataset(20, size=8, seed=5)
        for label in labels:
            assert 1.0 <= flt.ava_weighted_mean(label) <= 10.0


class TestFramesDir:
    def test_reads_and_orders_by_trailing_digits(self, tmp_path):
        from thumbforge.images import write_ppm
        rng = np.random.default_rng(14)
        for fid in (3, 1, 12):
            write_ppm(tmp_path / f"frame_{fid:05d}.ppm",
                      rng.uniform(0, 1, (4, 4, 3)))
        seq = flt.read_frames_dir(tmp_path)
        assert seq.indices == [1, 3, 12]

    def test_skips_unreadable_with_callback(self, tmp_path):
        from thumbforge.images import write_ppm
        write_ppm(tmp_path / "frame_1.ppm", np.zeros((4, 4, 3)))
        (tmp_path / "frame_2.ppm").write_bytes(b"P6 garbage")
        skipped = []
        seq = flt.read_frames_dir(tmp_path,
                                  on_error=lambda name, exc: skipped.append(name))
        assert seq.indices == [1]
        assert skipped == ["frame_2.ppm"]

    def test_missing_dir(self):
        with pytest.raises(InputError):
            flt.read_frames_dir("/nonexistent/frames")

    def test_frames_from_tensor_stack(self, tmp_path):
        from thumbforge.data_io import write_tensor
        stack = np.random.default_rng(15).uniform(0, 1, (4, 6, 6, 3))
        path = tmp_path / "frames.tft"
        write_tensor(path, stack)
        seq = flt.load_frames(str(path))
        assert seq.indices == [0, 1, 2, 3]
        npt.assert_allclose(seq.frames[2], stack[2], atol=1e-12)

    def test_tensor_stack_bad_shape(self, tmp_path):
        from thumbforge.data_io import write_tensor
        path = tmp_path / "bad.tft"
        write_tensor(path, np.zeros((4, 6, 6)))
        with pytest.raises(InputError):
            flt.read_frames_tensor(str(path))
