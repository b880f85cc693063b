"""Mask decoding: final readout -> full-resolution logits -> label map."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoders import FramePyramid
from .numerics import DTYPE, ContractError, bilinear_resize, conv2d, gelu
from .result import SegmentationResult


@dataclass
class DecoderWeights:
    """Seeded upsampling decoder with stride-8 and stride-4 skip projections."""

    conv16: tuple[np.ndarray, np.ndarray]
    skip8: tuple[np.ndarray, np.ndarray]
    conv8: tuple[np.ndarray, np.ndarray]
    skip4: tuple[np.ndarray, np.ndarray]
    head: tuple[np.ndarray, np.ndarray]

    @classmethod
    def generate(cls, seed: int, embed_dim: int, widths: tuple[int, int, int], hidden: int = 32) -> "DecoderWeights":
        rng = np.random.default_rng([seed, 0xDEC])

        def conv(k, cin, cout):
            w = rng.standard_normal((k, k, cin, cout)) * math.sqrt(2.0 / (k * k * cin))
            return w.astype(DTYPE), np.zeros(cout, DTYPE)

        c4, c8, _ = widths
        return cls(
            conv16=conv(3, embed_dim, hidden),
            skip8=conv(1, c8, hidden),
            conv8=conv(3, hidden, hidden),
            skip4=conv(1, c4, hidden),
            head=conv(3, hidden, 1),
        )


def _to_grid(readout, pyramid: FramePyramid) -> np.ndarray:
    readout = np.asarray(readout, dtype=DTYPE)
    gh, gw = pyramid.grid_shape
    if readout.ndim != 2 or readout.shape[0] != gh * gw:
        raise ContractError(f"readout {readout.shape} does not fit the {gh}x{gw} grid of the pyramid")
    return readout.reshape(gh, gw, readout.shape[1])


def _to_image(logits_grid: np.ndarray, pyramid: FramePyramid) -> np.ndarray:
    ph, pw = pyramid.padded_shape
    h, w = pyramid.image_shape
    full = bilinear_resize(logits_grid, ph, pw)
    return np.ascontiguousarray(full[:h, :w])


def decode(readout, pyramid: FramePyramid, weights: DecoderWeights) -> np.ndarray:
    """Decode a ``(P, C)`` readout on the stride-16 grid into ``(H, W, 1)`` logits."""
    x = _to_grid(readout, pyramid)
    gh, gw = pyramid.grid_shape
    x = gelu(conv2d(x, *weights.conv16, padding=1))
    x = bilinear_resize(x, 2 * gh, 2 * gw) + conv2d(pyramid.f8, *weights.skip8)
    x = gelu(conv2d(x, *weights.conv8, padding=1))
    x = bilinear_resize(x, 4 * gh, 4 * gw) + conv2d(pyramid.f4, *weights.skip4)
    logits4 = conv2d(x, *weights.head, padding=1)
    return _to_image(logits4, pyramid)


@dataclass
class AnalyticDecoder:
    """Logit ``gain * (evidence - 0.5)`` from the first readout channel."""

    gain: float = 8.0

    def __call__(self, readout, pyramid: FramePyramid) -> np.ndarray:
        grid = _to_grid(readout, pyramid)[..., :1]
        return _to_image((grid - DTYPE(0.5)) * DTYPE(self.gain), pyramid)


def logits_to_label_map(per_object_logits, object_ids, **meta) -> SegmentationResult:
    """Softmax over ``[0 (background), object logits...]`` at every pixel."""
    ids = [int(i) for i in object_ids]
    if len(set(ids)) != len(ids):
        raise ContractError(f"duplicate object ids {ids}")
    if len(per_object_logits) != len(ids):
        raise ContractError("one logit map per object id is required")
    order = np.argsort(ids, kind="stable")
    maps = [np.asarray(per_object_logits[i], dtype=DTYPE).reshape(np.shape(per_object_logits[i])[:2])
            for i in order]
    if any(m.shape != maps[0].shape for m in maps):
        raise ContractError("logit maps differ in extent")
    logits = np.stack([np.zeros_like(maps[0])] + maps)
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    probs = (e / e.sum(axis=0, keepdims=True))[1:]
    return SegmentationResult.from_probabilities(probs, [ids[i] for i in order], **meta)
