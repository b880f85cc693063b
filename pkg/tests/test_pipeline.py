import numpy as np
import pytest

import oracles
from conftest import moving_square
from memvos.metrics import jaccard
from memvos.numerics import ContractError
from memvos.pipeline import Model, ModelConfig, VideoTask, resize_labels, run_video, run_video_with_tta
from memvos.pixel_memory import MemoryConfig

ANALYTIC = ModelConfig(encoder="analytic")
TOY = ModelConfig(encoder="toy", seed=3)


def two_object_video(num_frames=4, size=32):
    rng = np.random.default_rng(0)
    frames, labels = [], []
    for t in range(num_frames):
        f = rng.random((size, size, 3)).astype(np.float32) * 0.2
        g = np.zeros((size, size), np.uint8)
        f[4:12, 4 + t:12 + t] = (0.9, 0.1, 0.1)
        g[4:12, 4 + t:12 + t] = 1
        f[18:28, 16 - t:26 - t] = (0.1, 0.2, 0.9)
        g[18:28, 16 - t:26 - t] = 2
        frames.append(f)
        labels.append(g)
    return frames, labels


class TestValidation:
    def test_shape_mismatch(self):
        frames, labels = moving_square(2)
        with pytest.raises(ContractError):
            run_video(VideoTask("v", frames, labels[0][:-1]))

    def test_non_contiguous_ids(self):
        frames, labels = moving_square(2)
        with pytest.raises(ContractError):
            run_video(VideoTask("v", frames, labels[0] * 2))

    def test_no_objects(self):
        frames, _ = moving_square(2)
        with pytest.raises(ContractError):
            run_video(VideoTask("v", frames, np.zeros((64, 64), np.uint8)))

    def test_ragged_frames(self):
        frames, labels = moving_square(2)
        with pytest.raises(ContractError):
            run_video(VideoTask("v", [frames[0], frames[1][:32]], labels[0]))

    def test_bad_encoder_mode(self):
        with pytest.raises(ContractError):
            ModelConfig(encoder="hiera")


class TestRunVideo:
    def test_single_frame_returns_annotation(self):
        frames, labels = two_object_video(1)
        (res,) = run_video(VideoTask("v", frames, labels[0], model=TOY))
        assert res.label_map.tobytes() == labels[0].tobytes()

    def test_deterministic(self):
        frames, labels = two_object_video(3)
        task = VideoTask("v", frames, labels[0], model=TOY)
        a, b = run_video(task), run_video(task)
        for x, y in zip(a, b):
            assert x.probabilities.tobytes() == y.probabilities.tobytes()
            assert x.label_map.tobytes() == y.label_map.tobytes()

    def test_toy_outputs_well_formed(self):
        frames, labels = two_object_video(3, size=40)
        out = run_video(VideoTask("v", frames, labels[0], model=TOY))
        assert len(out) == 3
        for t, res in enumerate(out):
            assert res.frame_index == t and res.video_id == "v"
            assert res.shape == (40, 40)
            assert set(np.unique(res.label_map)) <= {0, 1, 2}
            np.testing.assert_allclose(res.background + res.probabilities.sum(0), 1, atol=1e-5)

    def test_analytic_square(self, square_video):
        frames, labels = square_video
        out = run_video(VideoTask("sq", frames, labels[0], model=ANALYTIC))
        for t in range(1, len(frames)):
            assert jaccard(out[t].label_map == 1, labels[t] == 1) >= 0.95

    def test_analytic_agrees_with_nearest_colour(self, square_video):
        frames, labels = square_video
        out = run_video(VideoTask("sq", frames, labels[0], model=ANALYTIC))
        for t in (1, 15, 31):
            nn = oracles.nearest_colour_segmentation(frames[t], frames[0], labels[0])
            assert jaccard(out[t].label_map == 1, nn == 1) >= 0.95

    def test_analytic_two_objects(self):
        frames, labels = two_object_video(6)
        out = run_video(VideoTask("v", frames, labels[0], model=ANALYTIC))
        for t in range(1, 6):
            for oid in (1, 2):
                assert jaccard(out[t].label_map == oid, labels[t] == oid) >= 0.9

    def test_encoder_called_once_per_frame(self):
        frames, labels = two_object_video(4)
        model = Model(TOY)
        run_video(VideoTask("v", frames, labels[0], model=TOY), model)
        assert model.encoder.calls == 4

    def test_memory_trajectory_300_frames(self):
        frames = [np.full((4, 4, 3), t / 300, np.float32) for t in range(300)]
        ann = np.zeros((4, 4), np.uint8)
        ann[:2] = 1
        expected = oracles.simulate_memory(300, 45, 40)
        seen = []
        task = VideoTask("long", frames, ann, model=ANALYTIC)
        assert task.memory_config() == MemoryConfig(45, 40, 40)
        run_video(task, on_frame=lambda t, bank: seen.append(bank.frame_indices))
        assert seen == expected

    def test_memory_override(self):
        frames, labels = moving_square(8, size=16, side=4, y=4, x0=2)
        seen = []
        run_video(VideoTask("v", frames, labels[0], memory=MemoryConfig(3, 2, 5), model=ANALYTIC),
                  on_frame=lambda t, bank: seen.append(bank.frame_indices))
        assert seen == oracles.simulate_memory(8, 3, 2)

    def test_ids_never_created(self):
        frames, labels = two_object_video(3)
        first = np.where(labels[0] == 2, 0, labels[0]).astype(np.uint8)
        out = run_video(VideoTask("v", frames, first, model=TOY))
        for res in out:
            assert set(np.unique(res.label_map)) <= {0, 1}
            assert res.object_ids == (1,)


class TestTTA:
    def test_native_equals_plain(self):
        frames, labels = two_object_video(3)
        task = VideoTask("v", frames, labels[0], model=TOY)
        plain = run_video(task)
        fused = run_video_with_tta(task)
        for a, b in zip(plain, fused):
            assert a.probabilities.tobytes() == b.probabilities.tobytes()
            assert a.label_map.tobytes() == b.label_map.tobytes()

    def test_single_frame_eight_variants(self):
        frames, labels = two_object_video(1)
        out = run_video_with_tta(VideoTask("v", frames, labels[0], model=TOY), (16, 24, 32, 40), flip=True)
        assert out[0].label_map.tobytes() == labels[0].tobytes()

    def test_encoder_calls_per_variant(self):
        frames, labels = two_object_video(3)
        model = Model(TOY)
        run_video_with_tta(VideoTask("v", frames, labels[0], model=TOY), (24, 32), flip=True, model=model)
        assert model.encoder.calls == 3 * 2 * 2

    def test_two_variants_do_not_degrade(self, square_video):
        frames, labels = square_video
        task = VideoTask("sq", frames, labels[0], model=ANALYTIC)
        single = run_video(task)
        fused = run_video_with_tta(task, (None,), flip=True, weights=[1, 1])
        for t in range(1, len(frames)):
            j_single = jaccard(single[t].label_map == 1, labels[t] == 1)
            assert jaccard(fused[t].label_map == 1, labels[t] == 1) >= j_single - 0.02

    def test_weight_count(self):
        frames, labels = two_object_video(2)
        with pytest.raises(ContractError):
            run_video_with_tta(VideoTask("v", frames, labels[0], model=TOY), (None,), True, [1.0])

    def test_vanishing_object_keeps_id(self):
        frames, labels = two_object_video(2, size=32)
        ann = labels[0].copy()
        ann[ann == 2] = 0
        ann[30, 30] = 2  # a single pixel, lost when downscaled
        out = run_video_with_tta(VideoTask("v", frames, ann, model=TOY), (None, 16))
        assert all(r.object_ids == (1, 2) for r in out)


def test_resize_labels():
    lm = np.array([[1, 2], [3, 4]], np.uint8)
    np.testing.assert_array_equal(resize_labels(lm, (4, 4)), np.kron(lm, np.ones((2, 2), np.uint8)))
    np.testing.assert_array_equal(resize_labels(np.kron(lm, np.ones((2, 2), np.uint8)), (2, 2)), lm)
