"""Test-time augmentation and result fusion.

Variants rescale a video so its shorter side hits a target size (rounded to a
multiple of 4) and optionally mirror it.  Results from each variant are
mapped back to native resolution, averaged per pixel with per-run weights
and re-labelled.  Whole videos can also be picked per video from the run
with the best J&F in a set of score logs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DTYPE, ContractError, bilinear_resize, hflip
from .result import SegmentationResult

CHALLENGE_SCALES = (480, 660, 800, 1000)


@dataclass(frozen=True)
class VariantDescriptor:
    """How a variant was produced from the native video; ``scale=None`` keeps the size."""

    native_shape: tuple[int, int]
    scaled_shape: tuple[int, int]
    scale: int | None = None
    flip: bool = False

    @property
    def is_identity(self) -> bool:
        return not self.flip and self.scaled_shape == self.native_shape

    @property
    def name(self) -> str:
        s = "native" if self.scale is None else str(self.scale)
        return f"{s}{'-flip' if self.flip else ''}"

    def apply(self, frame: np.ndarray) -> np.ndarray:
        out = np.asarray(frame, dtype=DTYPE)
        if self.scaled_shape != self.native_shape:
            out = bilinear_resize(out, *self.scaled_shape)
        if self.flip:
            out = hflip(out)
        return out


def _round4(x: float) -> int:
    return max(4, 4 * int(math.floor(x / 4 + 0.5)))


def scaled_shape(shape: tuple[int, int], shorter_side: int) -> tuple[int, int]:
    """Target extents with the shorter side at ``shorter_side``, aspect kept, both multiples of 4."""
    h, w = shape
    if h <= w:
        return _round4(shorter_side), _round4(w * shorter_side / h)
    return _round4(h * shorter_side / w), _round4(shorter_side)


def make_variants(frames, scales=(None,), flip: bool = False) -> list[tuple[VariantDescriptor, list[np.ndarray]]]:
    """One transformed copy of ``frames`` per (scale, flip) pair.

    ``None`` in ``scales`` means native resolution.
    """
    scales = list(scales)
    if not scales:
        raise ContractError("at least one scale is required")
    frames = [np.asarray(f, dtype=DTYPE) for f in frames]
    native = frames[0].shape[:2]
    out = []
    for scale in scales:
        target = native if scale is None else scaled_shape(native, int(scale))
        for flipped in ((False, True) if flip else (False,)):
            desc = VariantDescriptor(native, target, scale, flipped)
            out.append((desc, [desc.apply(f) for f in frames]))
    return out


def invert_variant(result: SegmentationResult, desc: VariantDescriptor) -> SegmentationResult:
    """Map a variant's result back to native resolution and orientation."""
    if desc.is_identity:
        return result
    probs = result.probabilities
    if desc.flip:
        probs = probs[:, :, ::-1]
    if desc.scaled_shape != desc.native_shape:
        planes = np.concatenate([result.background[None, :, ::-1] if desc.flip else result.background[None],
                                 probs])
        resized = bilinear_resize(planes.transpose(1, 2, 0), *desc.native_shape).transpose(2, 0, 1)
        resized = np.clip(resized, 0.0, None)
        resized = resized / resized.sum(axis=0, keepdims=True)
        probs = resized[1:]
    return SegmentationResult.from_probabilities(
        np.ascontiguousarray(probs), result.object_ids,
        frame_index=result.frame_index, video_id=result.video_id, run_id=result.run_id,
    )


def fuse_pixel(results, weights=None) -> SegmentationResult:
    """Weighted soft vote of same-frame results: ``sum(w * p) / sum(w)`` then argmax."""
    results = list(results)
    if not results:
        raise ContractError("nothing to fuse")
    w = np.ones(len(results)) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (len(results),) or (w < 0).any() or w.sum() <= 0:
        raise ContractError(f"need one non-negative weight per result, not all zero; got {weights}")
    first = results[0]
    for r in results[1:]:
        if r.object_ids != first.object_ids:
            raise ContractError(f"object sets differ: {first.object_ids} vs {r.object_ids}")
        if r.shape != first.shape:
            raise ContractError(f"extents differ: {first.shape} vs {r.shape}")
    acc = np.zeros(first.probabilities.shape, dtype=np.float64)
    for wi, r in zip(w, results):
        if wi:
            acc += wi * r.probabilities.astype(np.float64)
    fused = (acc / w.sum()).astype(DTYPE)
    return SegmentationResult.from_probabilities(
        fused, first.object_ids, frame_index=first.frame_index, video_id=first.video_id, run_id="fused",
    )


@dataclass(frozen=True)
class VideoScore:
    J: float
    F: float
    JF: float


@dataclass
class ScoreLog:
    """Per-video J, F and J&F (0-100 scale) of one run."""

    run_id: str
    videos: dict[str, VideoScore] = field(default_factory=dict)
    mean: VideoScore | None = None

    def __post_init__(self):
        for vid, s in self.videos.items():
            if abs(s.JF - (s.J + s.F) / 2) > 1e-6:
                raise ContractError(f"{self.run_id}/{vid}: JF {s.JF} != (J + F) / 2")

    def to_dict(self) -> dict:
        doc = {
            "run_id": self.run_id,
            "videos": [{"video_id": v, "J": s.J, "F": s.F, "JF": s.JF} for v, s in sorted(self.videos.items())],
        }
        if self.mean is not None:
            doc["mean"] = {"J": self.mean.J, "F": self.mean.F, "JF": self.mean.JF}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, doc: dict) -> "ScoreLog":
        videos = {str(v["video_id"]): VideoScore(float(v["J"]), float(v["F"]), float(v["JF"]))
                  for v in doc["videos"]}
        mean = doc.get("mean")
        return cls(str(doc["run_id"]), videos, VideoScore(**mean) if mean else None)

    @classmethod
    def load(cls, path) -> "ScoreLog":
        return cls.from_dict(json.loads(Path(path).read_text()))


def select_runs(logs) -> dict[str, str]:
    """Per video, the run with the highest J&F; ties go to the lowest run id."""
    logs = sorted(logs, key=lambda log: log.run_id)
    if not logs:
        raise ContractError("no score logs given")
    videos = set().union(*(log.videos for log in logs))
    for log in logs:
        missing = videos - set(log.videos)
        if missing:
            raise ContractError(f"log {log.run_id} lacks videos {sorted(missing)}")
    selection = {}
    for vid in sorted(videos):
        best = logs[0]
        for log in logs[1:]:
            if log.videos[vid].JF > best.videos[vid].JF:
                best = log
        selection[vid] = best.run_id
    return selection


def fuse_video(logs, per_run_outputs) -> tuple[dict[str, str], dict]:
    """Video-level fusion.

    Args:
        logs: one :class:`ScoreLog` per run.
        per_run_outputs: run id -> video id -> that run's output for the video.

    Returns:
        ``(selection, outputs)`` mapping each video to the chosen run id and
        to the chosen run's output.
    """
    selection = select_runs(logs)
    outputs = {}
    for vid, run in selection.items():
        try:
            outputs[vid] = per_run_outputs[run][vid]
        except KeyError:
            raise ContractError(f"no output for video {vid} from run {run}") from None
    return selection, outputs
