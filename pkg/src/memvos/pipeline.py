"""Streaming per-video inference.

Frame 0 is taken from the annotation and stored as permanent memory.  For
every later frame, each object is segmented by reading pixel memory, refining
the readout with the object transformer (queries plus that object's memory
summary) and decoding.  The predicted soft masks are then encoded back into
memory, and the bank is trimmed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .decoder import AnalyticDecoder, DecoderWeights, decode, logits_to_label_map
from .encoders import AnalyticEncoder, EncoderWeights, FramePyramid, ImageEncoder
from .fusion import fuse_pixel, invert_variant, make_variants
from .numerics import DTYPE, ContractError
from .object_memory import derive_pooling_masks, object_summary, pooling_statistics
from .pixel_memory import (
    KeyProjection,
    MemoryBank,
    MemoryConfig,
    MemoryFrame,
    ReadoutWeights,
    read_memory,
    route_hyperparams,
)
from .result import SegmentationResult
from .transformer import TransformerParams, forward

ENCODER_MODES = ("toy", "analytic")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture widths, seed and encoder mode.

    ``widths`` are the stride-4/8/16 channel counts; the last one is the
    embedding width shared by the mask encoder, memory values and readout.
    """

    encoder: str = "toy"
    seed: int = 0
    widths: tuple[int, int, int] = (32, 48, 64)
    key_dim: int = 32
    num_queries: int = 8
    num_blocks: int = 3
    heads: int = 2
    ffn_mult: int = 2
    decoder_hidden: int = 32
    analytic_stride: int = 1

    def __post_init__(self):
        if self.encoder not in ENCODER_MODES:
            raise ContractError(f"encoder must be one of {ENCODER_MODES}, got {self.encoder!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


class Model:
    """Every seeded component needed to segment a video."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        seed = config.seed
        if config.encoder == "toy":
            enc_w = EncoderWeights.generate(seed, config.widths)
            self.encoder = ImageEncoder(enc_w)
            dim = enc_w.embed_dim
            self.key_proj = KeyProjection.generate(seed, dim, config.key_dim)
            self.readout = ReadoutWeights.generate(seed, dim, dim, dim)
            self.transformer = TransformerParams.generate(
                seed, dim, config.num_blocks, config.heads, config.num_queries, config.ffn_mult)
            dec_w = DecoderWeights.generate(seed, dim, config.widths, config.decoder_hidden)
            self._decode = lambda r, pyr: decode(r, pyr, dec_w)
        else:
            self.encoder = AnalyticEncoder(config.analytic_stride)
            self.key_proj = KeyProjection.generate(seed, 3, 8, center=0.5, normalize=True, gain=4.0)
            # readout = the mask-evidence channel of the attended values
            w = np.zeros((self.encoder.value_dim + self.encoder.embed_dim, 1), DTYPE)
            w[self.encoder.value_dim - 1, 0] = 1
            self.readout = ReadoutWeights(w, np.zeros(1, DTYPE))
            self.transformer = TransformerParams([], 1, np.zeros((config.num_queries, 1), DTYPE))
            self._decode = AnalyticDecoder()

    def keys(self, pyramid: FramePyramid) -> np.ndarray:
        return self.key_proj(pyramid.flat_f16())

    def decode(self, readout, pyramid: FramePyramid) -> np.ndarray:
        return self._decode(readout, pyramid)

    def memory_frame(self, pyramid: FramePyramid, soft_masks: dict[int, np.ndarray],
                     keys: np.ndarray | None = None) -> MemoryFrame:
        if keys is None:
            keys = self.keys(pyramid)
        values, sums, mass = {}, {}, {}
        for oid, mask in soft_masks.items():
            v = self.encoder.mask_values(pyramid, mask)
            grid = self.encoder.mask_grid(pyramid, mask)
            w = derive_pooling_masks(grid, self.config.num_queries, pyramid.grid_shape, self.config.seed)
            values[oid] = v
            sums[oid], mass[oid] = pooling_statistics(v, w)
        return MemoryFrame(pyramid.frame_index, keys, values, sums, mass)


@dataclass
class VideoTask:
    """One video to segment.

    ``frames`` are ``HxWx3`` float arrays in [0, 1]; ``annotation`` is the
    first frame's indexed label map with ids ``1..K``.  ``memory`` overrides
    the length-based memory settings.
    """

    video_id: str
    frames: list
    annotation: np.ndarray
    memory: MemoryConfig | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    object_ids: tuple[int, ...] | None = None

    def validate(self) -> tuple[int, ...]:
        if not len(self.frames):
            raise ContractError(f"{self.video_id}: no frames")
        ann = np.asarray(self.annotation)
        shape = np.shape(self.frames[0])[:2]
        if ann.shape != shape:
            raise ContractError(f"{self.video_id}: annotation {ann.shape} does not match frame {shape}")
        for t, f in enumerate(self.frames):
            if np.shape(f)[:2] != shape:
                raise ContractError(f"{self.video_id}: frame {t} has extents {np.shape(f)[:2]}, expected {shape}")
        present = tuple(int(i) for i in np.unique(ann) if i)
        ids = present if self.object_ids is None else tuple(sorted(self.object_ids))
        if set(present) - set(ids):
            raise ContractError(f"{self.video_id}: annotation labels {present} outside object set {ids}")
        if not ids:
            raise ContractError(f"{self.video_id}: annotation has no objects")
        if ids != tuple(range(1, len(ids) + 1)):
            raise ContractError(f"{self.video_id}: object ids must be 1..K, got {ids}")
        return ids

    def memory_config(self) -> MemoryConfig:
        return self.memory or route_hyperparams(len(self.frames))


def _one_hot(annotation, ids) -> SegmentationResult:
    return SegmentationResult.from_label_map(annotation, ids)


def run_video(task: VideoTask, model: Model | None = None,
              on_frame: Callable[[int, MemoryBank], None] | None = None) -> list[SegmentationResult]:
    """Segment every frame of ``task``.

    ``on_frame(t, bank)`` is called after frame ``t`` has been added to memory
    and the bank trimmed.
    """
    ids = task.validate()
    model = model or Model(task.model)
    cfg = task.memory_config()
    meta = {"video_id": task.video_id}

    first = _one_hot(task.annotation, ids).with_meta(frame_index=0, **meta)
    bank = MemoryBank()
    pyr = model.encoder.encode(task.frames[0], 0)
    bank.add(model.memory_frame(pyr, {oid: first.probability(oid) for oid in ids}), permanent=True)
    if on_frame:
        on_frame(0, bank)
    results = [first]

    for t in range(1, len(task.frames)):
        pyr = model.encoder.encode(task.frames[t], t)
        qkeys = model.keys(pyr)
        qfeat = pyr.flat_f16()
        logits = []
        for oid in ids:
            r0 = read_memory(bank, qkeys, oid, qfeat, cfg, model.readout)
            s = object_summary(bank, oid)
            r = forward(r0, model.transformer.queries, s, model.transformer)
            logits.append(model.decode(r, pyr))
        res = logits_to_label_map(logits, ids, frame_index=t, **meta)
        results.append(res)
        bank.add(model.memory_frame(pyr, {oid: res.probability(oid) for oid in ids}, qkeys))
        bank.evict(cfg)
        if on_frame:
            on_frame(t, bank)
    return results


def resize_labels(label_map: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize of an indexed map (half-pixel centres)."""
    h, w = label_map.shape
    oh, ow = shape
    rows = np.minimum(((np.arange(oh) + 0.5) * h / oh).astype(np.intp), h - 1)
    cols = np.minimum(((np.arange(ow) + 0.5) * w / ow).astype(np.intp), w - 1)
    return label_map[rows[:, None], cols[None, :]]


def run_video_with_tta(task: VideoTask, scales=(None,), flip: bool = False, weights=None,
                       model: Model | None = None) -> list[SegmentationResult]:
    """Run every (scale, flip) variant, map results back and fuse them per frame."""
    ids = task.validate()
    model = model or Model(task.model)
    cfg = task.memory_config()
    variants = make_variants(task.frames, scales, flip)
    if weights is not None and len(weights) != len(variants):
        raise ContractError(f"{len(weights)} weights for {len(variants)} variants")

    per_variant = []
    for desc, frames in variants:
        ann = np.asarray(task.annotation, dtype=np.uint8)
        if desc.scaled_shape != desc.native_shape:
            ann = resize_labels(ann, desc.scaled_shape)
        if desc.flip:
            ann = ann[:, ::-1]
        # an object may vanish when downscaled; keep its id so the fusion sets agree
        sub = replace(task, frames=frames, annotation=np.ascontiguousarray(ann), memory=cfg, object_ids=ids)
        per_variant.append([invert_variant(r, desc) for r in run_video(sub, model)])

    first = _one_hot(task.annotation, ids).with_meta(frame_index=0, video_id=task.video_id)
    fused = [first]
    for t in range(1, len(task.frames)):
        fused.append(fuse_pixel([runs[t] for runs in per_variant], weights))
    return fused
