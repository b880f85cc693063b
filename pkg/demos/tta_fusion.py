"""
Test-time augmentation and fusion
=================================

Each variant rescales the video so its shorter side hits a target size and
optionally mirrors it.  Per-variant results are mapped back to the native
frame and averaged pixel by pixel with per-variant weights.
"""

import numpy as np

from memvos import ModelConfig, VideoTask, run_video, run_video_with_tta
from memvos.fusion import CHALLENGE_SCALES, ScoreLog, VideoScore, fuse_pixel, make_variants, select_runs
from memvos.metrics import jaccard
from memvos.result import SegmentationResult

frame = np.zeros((720, 1280, 3), np.float32)
for desc, _ in make_variants([frame[:8, :8]], CHALLENGE_SCALES, flip=True):
    print(f"{desc.name:>9}: 8x8 -> {desc.scaled_shape}")
print("720x1280 at 480 ->", make_variants([frame], [480])[0][0].scaled_shape)

# %%
# Soft voting: two hard results disagree on the first pixel.  The heavier
# run wins.
a = SegmentationResult.from_label_map(np.array([[1, 0]], np.uint8), [1])
b = SegmentationResult.from_label_map(np.array([[0, 0]], np.uint8), [1])
print("weights (2, 1):", fuse_pixel([a, b], [2, 1]).label_map)
print("weights (1, 2):", fuse_pixel([a, b], [1, 2]).label_map)

# %%
# Native plus mirrored variants on a moving square.  Fusion should not lose
# accuracy relative to a single run.
frames, truth = [], []
for t in range(12):
    f = np.full((48, 48, 3), 0.1, np.float32)
    g = np.zeros((48, 48), np.uint8)
    f[12:20, 6 + t:14 + t] = 0.9
    g[12:20, 6 + t:14 + t] = 1
    frames.append(f)
    truth.append(g)
task = VideoTask("sq", frames, truth[0], model=ModelConfig(encoder="analytic"))
single = run_video(task)
fused = run_video_with_tta(task, scales=(None,), flip=True)
for name, res in [("single", single), ("fused", fused)]:
    print(name, round(np.mean([jaccard(r.label_map == 1, g == 1) for r, g in zip(res[1:], truth[1:])]), 4))

# %%
# Video-level fusion picks, per video, the run with the best J&F.
logs = [ScoreLog("A", {"v1": VideoScore(70, 70, 70), "v2": VideoScore(82, 78, 80)}),
        ScoreLog("B", {"v1": VideoScore(76, 74, 75), "v2": VideoScore(80, 80, 80)})]
print(select_runs(logs))
