"""Fusion model tests: bundle validation, forward contract, latent selection
against the exhaustive oracle, padding, and training steps."""

import numpy as np
import numpy.testing as npt
import pytest

from thumbforge import fusion as fus
from thumbforge.errors import (
    DimensionError,
    InputError,
    TrainingDataError,
    ValidationError,
)
from thumbforge.gradcheck import numerical_gradient, relative_error
from thumbforge.tensor import Tensor, active_tape, backward, no_grad
from thumbforge.training import AdamOptimizer


@pytest.fixture(autouse=True)
def fresh_tape():
    active_tape().clear()
    yield
    active_tape().clear()


def random_bundle(seed=0, n_frames=4, n_audio=3, gt=None):
    rng = np.random.default_rng(seed)
    return fus.FeatureBundle(
        frames=Tensor(rng.standard_normal((n_frames, 512))),
        audio=Tensor(rng.standard_normal((n_audio, 2048))),
        title=Tensor(rng.standard_normal(768)),
        description=Tensor(rng.standard_normal(768)),
        ground_truth_index=gt,
    )


def small_net(seed=0):
    config = fus.FusionConfig(frame_dim=8, audio_dim=16, text_dim=12,
                              n_blocks=1, heads=2, ffn_dim=6, head_width=8,
                              seed=seed)
    return fus.FusionNet(config)


def small_inputs(seed=0, requires_grad=False):
    rng = np.random.default_rng(seed)
    return (Tensor(rng.standard_normal((5, 8)), requires_grad=requires_grad),
            Tensor(rng.standard_normal((3, 16)), requires_grad=requires_grad),
            Tensor(rng.standard_normal(12), requires_grad=requires_grad),
            Tensor(rng.standard_normal(12), requires_grad=requires_grad))


class TestFeatureBundle:
    def test_valid_bundle(self):
        b = random_bundle()
        assert b.n_frames == 4
        npt.assert_array_equal(b.frame_ids, [0, 1, 2, 3])

    def test_wrong_title_width_names_modality(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValidationError, match="title"):
            fus.FeatureBundle(frames=Tensor(rng.standard_normal((2, 512))),
                              audio=Tensor(rng.standard_normal((2, 2048))),
                              title=Tensor(rng.standard_normal(769)),
                              description=Tensor(rng.standard_normal(768)))

    def test_zero_frames_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValidationError, match="frames"):
            fus.FeatureBundle(frames=Tensor(np.zeros((0, 512))),
                              audio=Tensor(rng.standard_normal((2, 2048))),
                              title=Tensor(rng.standard_normal(768)),
                              description=Tensor(rng.standard_normal(768)))

    def test_row_caps_enforced(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValidationError, match="audio"):
            fus.FeatureBundle(frames=Tensor(rng.standard_normal((2, 512))),
                              audio=Tensor(np.zeros((301, 2048))),
                              title=Tensor(rng.standard_normal(768)),
                              description=Tensor(rng.standard_normal(768)))

    def test_ground_truth_bounds(self):
        with pytest.raises(ValidationError, match="ground_truth_index"):
            random_bundle(gt=7)


class TestForward:
    def test_latent_width_and_concat_width(self):
        net = small_net()
        o, video = fus.fuse_features(net, *small_inputs(),
                                     return_video_vector=True)
        assert o.shape == (8,)
        assert video.shape == (8 + 16 + 12 + 12,)
        assert video.shape[0] == net.config.concat_dim

    def test_full_width_output_is_512(self):
        net = fus.FusionNet()
        assert net.config.concat_dim == 4096
        with no_grad():
            o = fus.forward(random_bundle(n_frames=3, n_audio=2), net)
        assert o.shape == (512,)

    def test_zero_parameters_give_zero_latent(self):
        net = small_net()
        for _, p in net.parameters():
            p.data[...] = 0.0
        o = fus.fuse_features(net, *small_inputs(seed=4))
        npt.assert_array_equal(o.data, np.zeros(8))

    def test_deterministic(self):
        net = small_net(seed=5)
        ins = small_inputs(seed=5)
        a = fus.fuse_features(net, *ins).data
        b = fus.fuse_features(net, *ins).data
        npt.assert_array_equal(a, b)

    def test_width_mismatch_names_modality(self):
        net = small_net()
        frames, audio, title, desc = small_inputs()
        with pytest.raises(DimensionError, match="audio"):
            fus.fuse_features(net, frames, Tensor(np.zeros((3, 15))), title, desc)

    def test_global_gate_never_amplifies(self):
        net = small_net(seed=6)
        rng = np.random.default_rng(6)
        for _ in range(50):
            v = Tensor(rng.standard_normal(net.config.concat_dim) * 3)
            out = net.gate_global(v).data
            assert np.all(np.abs(out) <= np.abs(v.data))
            assert np.all(np.sign(out) == np.sign(v.data))


class TestSelectThumbnail:
    def test_exact_row_selected_with_zero_distance(self):
        rng = np.random.default_rng(7)
        mat = rng.standard_normal((6, 512))
        res = fus.select_thumbnail(mat[3], mat)
        assert res.selected_frame_id == 3
        assert res.ranking[0] == (3, 0.0)

    def test_single_candidate(self):
        rng = np.random.default_rng(8)
        res = fus.select_thumbnail(rng.standard_normal(512),
                                   rng.standard_normal((1, 512)))
        assert res.selected_frame_id == 0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(9)
        o = rng.standard_normal(512)
        mat = rng.standard_normal((50, 512))
        res = fus.select_thumbnail(o, mat)
        best_id, best_d = None, np.inf
        for i in range(50):
            d = float(np.mean((mat[i] - o) ** 2))
            if d < best_d:
                best_id, best_d = i, d
        assert res.selected_frame_id == best_id
        assert res.ranking[0][1] == best_d

    def test_tie_break_on_duplicate_rows(self):
        rng = np.random.default_rng(10)
        row = rng.standard_normal(512)
        mat = np.vstack([rng.standard_normal(512), row, row, row])
        res = fus.select_thumbnail(row, mat, frame_ids=[9, 7, 2, 5])
        assert res.selected_frame_id == 2
        assert [fid for fid, _ in res.ranking[:3]] == [2, 5, 7]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        o = rng.standard_normal(512)
        mat = rng.standard_normal((20, 512))
        ids = np.arange(100, 120)
        base = fus.select_thumbnail(o, mat, ids).selected_frame_id
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(20)
            got = fus.select_thumbnail(o, mat[perm], ids[perm]).selected_frame_id
            assert got == base

    def test_ranking_sorted_nonnegative(self):
        rng = np.random.default_rng(12)
        res = fus.select_thumbnail(rng.standard_normal(512),
                                   rng.standard_normal((30, 512)))
        dists = [d for _, d in res.ranking]
        assert dists == sorted(dists)
        assert all(d >= 0 for d in dists)
        assert res.selected_frame_id == res.ranking[0][0]

    def test_empty_candidates(self):
        with pytest.raises(InputError):
            fus.select_thumbnail(np.zeros(512), np.zeros((0, 512)))


class TestPadOrTruncate:
    def test_identity(self):
        x = Tensor(np.random.default_rng(13).standard_normal((4, 3)))
        out, mask = fus.pad_or_truncate(x, 4)
        npt.assert_array_equal(out.data, x.data)
        assert mask.all()

    def test_pad_with_zeros_and_mask(self):
        x = Tensor(np.ones((2, 3)))
        out, mask = fus.pad_or_truncate(x, 4)
        npt.assert_array_equal(out.data[2:], np.zeros((2, 3)))
        npt.assert_array_equal(mask, [True, True, False, False])

    def test_truncate(self):
        x = Tensor(np.random.default_rng(14).standard_normal((6, 2)))
        out, mask = fus.pad_or_truncate(x, 3)
        npt.assert_array_equal(out.data, x.data[:3])
        assert mask.shape == (3,)

    def test_masked_mean_equals_original_mean(self):
        from thumbforge.layers import temporal_pool
        x = Tensor(np.random.default_rng(15).standard_normal((3, 5)))
        padded, mask = fus.pad_or_truncate(x, 8)
        pooled = temporal_pool(padded, valid_rows=int(mask.sum()))
        npt.assert_allclose(pooled.data, x.data.mean(axis=0), atol=1e-12)


class TestTrainStep:
    def test_requires_ground_truth(self):
        net = fus.FusionNet()
        with pytest.raises(TrainingDataError):
            fus.train_step(random_bundle(), net, AdamOptimizer(lr=1e-3))

    def test_loss_nonnegative_and_decreases_on_repeat(self):
        net = fus.FusionNet(fus.FusionConfig(seed=1))
        bundle = random_bundle(seed=16, gt=2)
        opt = AdamOptimizer(lr=1e-3)
        first = fus.train_step(bundle, net, opt)
        assert first >= 0.0
        losses = [fus.train_step(bundle, net, opt) for _ in range(4)]
        assert losses[-1] < first

    def test_head_bias_gradient_matches_finite_differences(self):
        net = small_net(seed=17)
        frames, audio, title, desc = small_inputs(seed=17)
        rng = np.random.default_rng(17)
        target = Tensor(rng.standard_normal(8))

        def loss_tensor():
            from thumbforge import tensor as tf
            return tf.mse(fus.fuse_features(net, frames, audio, title, desc),
                          target)

        loss = loss_tensor()
        backward(loss)
        bias = net.head[2].bias
        analytic = bias.grad.copy()
        bias.grad = None

        def value():
            with no_grad():
                return loss_tensor().item()

        numeric = numerical_gradient(value, bias.data, h=1e-5)
        assert relative_error(analytic, numeric) < 1e-6
