"""Image and mask encoders.

The image encoder is a seeded three-stage convolutional hierarchy (stride 4
stem, then two stride-2 stages) producing features at strides 4, 8 and 16.
It runs once per frame; :class:`ImageEncoder` counts its calls so the
pipeline's one-pass-per-frame behaviour can be checked.

The mask encoder takes a soft object mask at a quarter of the image
resolution and maps it through two 2x2/stride-2 convolutions (4 then 16
channels) and a 1x1 convolution to the embedding width, with GELU and layer
norm after each of the first two stages.  The result is added to the
stride-16 image features.

:class:`AnalyticEncoder` is a weight-free stand-in whose features are plain
average-pooled RGB values; it exists so that memory matching can be tested
functionally without trained weights.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .numerics import DTYPE, ContractError, bilinear_resize, conv2d, gelu, layer_norm

MASK_CHANNELS = (4, 16)
FULL_EMBED_DIM = 256


@dataclass(frozen=True)
class FramePyramid:
    """Multiscale features of one frame.

    ``f16`` is the coarsest map and the one memory reads from; ``stride`` is
    its stride relative to the padded input.  The analytic encoder leaves
    ``f4``/``f8`` unset.
    """

    f4: np.ndarray | None
    f8: np.ndarray | None
    f16: np.ndarray
    frame_index: int
    image_shape: tuple[int, int]
    padded_shape: tuple[int, int]
    stride: int = 16

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.f16.shape[0], self.f16.shape[1]

    @property
    def num_positions(self) -> int:
        return self.f16.shape[0] * self.f16.shape[1]

    def flat_f16(self) -> np.ndarray:
        return self.f16.reshape(self.num_positions, -1)


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(DTYPE)


@dataclass
class ConvNorm:
    """Convolution weights with an optional trailing layer norm."""

    kernel: np.ndarray
    bias: np.ndarray
    ln_gain: np.ndarray | None = None
    ln_bias: np.ndarray | None = None

    @classmethod
    def seeded(cls, rng, k: int, cin: int, cout: int, norm: bool = True) -> "ConvNorm":
        kernel = _he(rng, (k, k, cin, cout), k * k * cin)
        bias = (rng.standard_normal(cout) * 0.02).astype(DTYPE)
        if not norm:
            return cls(kernel, bias)
        return cls(kernel, bias, np.ones(cout, DTYPE), np.zeros(cout, DTYPE))

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[3]

    def __call__(self, x: np.ndarray, stride: int) -> np.ndarray:
        y = conv2d(x, self.kernel, self.bias, stride=stride)
        if self.ln_gain is None:
            return y
        return layer_norm(gelu(y), self.ln_gain, self.ln_bias)


@dataclass
class EncoderWeights:
    """All parameters of the image and mask encoders.

    Generated deterministically from ``rng_seed``; ``widths`` holds the
    channel counts of the stride-4, stride-8 and stride-16 maps.  The last
    width is also the mask-encoder output width.
    """

    stem: ConvNorm
    stage8: ConvNorm
    stage16: ConvNorm
    mask_down1: ConvNorm
    mask_down2: ConvNorm
    mask_proj: ConvNorm
    no_mask_embedding: np.ndarray
    rng_seed: int

    @classmethod
    def generate(cls, seed: int, widths: tuple[int, int, int] = (32, 48, 64)) -> "EncoderWeights":
        c4, c8, c16 = widths
        rng = np.random.default_rng([seed, 0xE1C])
        return cls(
            stem=ConvNorm.seeded(rng, 4, 3, c4),
            stage8=ConvNorm.seeded(rng, 2, c4, c8),
            stage16=ConvNorm.seeded(rng, 2, c8, c16),
            mask_down1=ConvNorm.seeded(rng, 2, 1, MASK_CHANNELS[0]),
            mask_down2=ConvNorm.seeded(rng, 2, MASK_CHANNELS[0], MASK_CHANNELS[1]),
            mask_proj=ConvNorm.seeded(rng, 1, MASK_CHANNELS[1], c16, norm=False),
            no_mask_embedding=(rng.standard_normal(c16) * 0.1).astype(DTYPE),
            rng_seed=seed,
        )

    @property
    def widths(self) -> tuple[int, int, int]:
        return (self.stem.out_channels, self.stage8.out_channels, self.stage16.out_channels)

    @property
    def embed_dim(self) -> int:
        return self.mask_proj.out_channels


def pad_to_multiple(frame: np.ndarray, multiple: int) -> np.ndarray:
    """Zero-pad the bottom and right edges up to a multiple of ``multiple``."""
    h, w = frame.shape[:2]
    ph = -h % multiple
    pw = -w % multiple
    if not ph and not pw:
        return frame
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (frame.ndim - 2)
    return np.pad(frame, pad)


def _check_rgb(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=DTYPE)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ContractError(f"expected an HxWx3 RGB frame, got shape {frame.shape}")
    return frame


def encode_image(frame, weights: EncoderWeights, frame_index: int = 0) -> FramePyramid:
    """Encode an ``HxWx3`` frame (values in [0, 1]) into a stride 4/8/16 pyramid."""
    frame = _check_rgb(frame)
    padded = pad_to_multiple(frame, 16)
    f4 = weights.stem(padded, stride=4)
    f8 = weights.stage8(f4, stride=2)
    f16 = weights.stage16(f8, stride=2)
    return FramePyramid(f4, f8, f16, frame_index, frame.shape[:2], padded.shape[:2])


def encode_mask(mask, image_f16, weights: EncoderWeights) -> np.ndarray:
    """Fuse a soft mask (or its absence) into the stride-16 image embedding.

    Args:
        mask: ``(H/4, W/4, 1)`` soft mask in [0, 1], or None for "no mask".
        image_f16: ``(H/16, W/16, C')`` image features.
        weights: encoder parameters.

    Returns:
        ``(H/16, W/16, C')`` fused embedding.
    """
    image_f16 = np.asarray(image_f16, dtype=DTYPE)
    if mask is None:
        return (image_f16 + weights.no_mask_embedding).astype(DTYPE)
    mask = np.asarray(mask, dtype=DTYPE)
    if mask.ndim == 2:
        mask = mask[..., None]
    gh, gw = image_f16.shape[:2]
    if mask.shape != (4 * gh, 4 * gw, 1):
        raise ContractError(f"mask must be {(4 * gh, 4 * gw, 1)} for a {gh}x{gw} grid, got {mask.shape}")
    m = weights.mask_down1(mask, stride=2)
    m = weights.mask_down2(m, stride=2)
    m = weights.mask_proj(m, stride=1)
    return (image_f16 + m).astype(DTYPE)


@dataclass
class ImageEncoder:
    """Seeded learned-toy encoder with a call counter."""

    weights: EncoderWeights
    calls: int = field(default=0, init=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def embed_dim(self) -> int:
        return self.weights.embed_dim

    @property
    def value_dim(self) -> int:
        return self.weights.embed_dim

    def encode(self, frame, frame_index: int = 0) -> FramePyramid:
        with self._lock:
            self.calls += 1
        return encode_image(frame, self.weights, frame_index)

    def mask_values(self, pyramid: FramePyramid, soft_mask) -> np.ndarray:
        """Per-position memory values ``(P, C')`` for one object's full-resolution soft mask."""
        if soft_mask is None:
            fused = encode_mask(None, pyramid.f16, self.weights)
        else:
            padded = pad_to_multiple(np.asarray(soft_mask, dtype=DTYPE), 16)
            ph, pw = pyramid.padded_shape
            quarter = bilinear_resize(padded[..., None], ph // 4, pw // 4)
            fused = encode_mask(np.clip(quarter, 0.0, 1.0), pyramid.f16, self.weights)
        return fused.reshape(pyramid.num_positions, -1)

    def mask_grid(self, pyramid: FramePyramid, soft_mask) -> np.ndarray:
        """The soft mask resampled onto the stride-16 grid, flattened to ``(P,)``."""
        return _mask_to_grid(soft_mask, pyramid)


def _mask_to_grid(soft_mask, pyramid: FramePyramid) -> np.ndarray:
    padded = pad_to_multiple(np.asarray(soft_mask, dtype=DTYPE), pyramid.stride)
    gh, gw = pyramid.grid_shape
    if pyramid.stride == 1:
        grid = padded
    else:
        grid = padded.reshape(gh, pyramid.stride, gw, pyramid.stride).mean(axis=(1, 3))
    return np.clip(grid, 0.0, 1.0).reshape(-1).astype(DTYPE)


def average_pool(x: np.ndarray, stride: int) -> np.ndarray:
    """Non-overlapping ``stride x stride`` mean pooling of an ``(H, W, C)`` map."""
    if stride == 1:
        return np.asarray(x, dtype=DTYPE)
    h, w, c = x.shape
    return x.reshape(h // stride, stride, w // stride, stride, c).mean(axis=(1, 3)).astype(DTYPE)


@dataclass
class AnalyticEncoder:
    """Weight-free encoder: features are RGB averaged over ``stride`` squares.

    Memory values are the pooled RGB with the pooled soft mask appended, so
    the mask evidence read out of memory is the last value channel.
    """

    stride: int = 1
    calls: int = field(default=0, init=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def embed_dim(self) -> int:
        return 3

    @property
    def value_dim(self) -> int:
        return 4

    def encode(self, frame, frame_index: int = 0) -> FramePyramid:
        frame = _check_rgb(frame)
        with self._lock:
            self.calls += 1
        padded = pad_to_multiple(frame, self.stride)
        f = average_pool(padded, self.stride)
        return FramePyramid(None, None, f, frame_index, frame.shape[:2], padded.shape[:2], self.stride)

    def mask_values(self, pyramid: FramePyramid, soft_mask) -> np.ndarray:
        rgb = pyramid.flat_f16()
        if soft_mask is None:
            m = np.zeros((rgb.shape[0], 1), DTYPE)
        else:
            m = _mask_to_grid(soft_mask, pyramid)[:, None]
        return np.concatenate([rgb, m], axis=1)

    def mask_grid(self, pyramid: FramePyramid, soft_mask) -> np.ndarray:
        return _mask_to_grid(soft_mask, pyramid)
