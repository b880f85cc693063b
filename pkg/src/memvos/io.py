"""On-disk formats: dataset layout, indexed PNG masks, probability sidecars, config.

Dataset layout::

    <root>/JPEGImages/<video>/<frame>.jpg|.png   (sorted by file name)
    <root>/Annotations/<video>/<frame>.png       (first frame required)

Probability sidecar (``<frame>.prob``), little-endian::

    magic  b"VOSP"
    uint32 H, W, K
    float32[K][H][W]   plane k holds object k + 1
"""
from __future__ import annotations

import json
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from .numerics import DTYPE, ContractError
from .pipeline import ModelConfig
from .pixel_memory import MemoryConfig
from .result import SegmentationResult

FRAME_SUFFIXES = (".jpg", ".jpeg", ".png")
SIDECAR_MAGIC = b"VOSP"
_HEADER = struct.Struct("<4sIII")


def _palette() -> list[int]:
    # the usual VOS colour map: bit-interleaved RGB per label
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal += [r, g, b]
    return pal


PALETTE = _palette()


def list_videos(root) -> list[str]:
    images = Path(root) / "JPEGImages"
    if not images.is_dir():
        raise ContractError(f"{root}: no JPEGImages directory")
    return sorted(p.name for p in images.iterdir() if p.is_dir())


def frame_paths(root, video: str) -> list[Path]:
    d = Path(root) / "JPEGImages" / video
    return sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def load_frame(path) -> np.ndarray:
    """RGB image as ``HxWx3`` float32 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=DTYPE) / DTYPE(255)


def read_mask(path) -> np.ndarray:
    """Indexed mask as ``HxW`` uint8; any palette is ignored."""
    with Image.open(path) as im:
        if im.mode not in ("P", "L", "1", "I", "I;16"):
            raise ContractError(f"{path}: expected a single-channel indexed mask, got mode {im.mode}")
        arr = np.asarray(im)
    if arr.max(initial=0) > 255:
        raise ContractError(f"{path}: label values above 255")
    return arr.astype(np.uint8)


def write_mask(path, label_map) -> None:
    im = Image.fromarray(np.asarray(label_map, dtype=np.uint8), mode="P")
    im.putpalette(PALETTE)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    im.save(path, format="PNG")


def annotation_path(root, video: str, first_frame: Path) -> Path:
    return Path(root) / "Annotations" / video / (first_frame.stem + ".png")


def write_probabilities(path, probs) -> None:
    probs = np.ascontiguousarray(probs, dtype="<f4")
    k, h, w = probs.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SIDECAR_MAGIC, h, w, k))
        fh.write(probs.tobytes())


def read_probabilities(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ContractError(f"{path}: truncated sidecar header")
    magic, h, w, k = _HEADER.unpack_from(data)
    if magic != SIDECAR_MAGIC:
        raise ContractError(f"{path}: bad sidecar magic {magic!r}")
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if body.size != k * h * w:
        raise ContractError(f"{path}: expected {k}x{h}x{w} floats, found {body.size}")
    return body.reshape(k, h, w).astype(DTYPE)


def write_result(out_dir, stem: str, result: SegmentationResult, probs: bool = False) -> None:
    out_dir = Path(out_dir)
    write_mask(out_dir / f"{stem}.png", result.label_map)
    if probs:
        write_probabilities(out_dir / f"{stem}.prob", result.probabilities)


def read_result(out_dir, stem: str) -> SegmentationResult:
    """Result from a sidecar; object ids are ``1..K`` by the sidecar convention."""
    probs = read_probabilities(Path(out_dir) / f"{stem}.prob")
    return SegmentationResult.from_probabilities(probs, range(1, probs.shape[0] + 1))


MEMORY_KEYS = ("max_mem_frames", "min_mem_frames", "top_k")
RUN_KEYS = ("scales", "flip")


def load_config(path) -> dict:
    """Read a JSON run configuration and check its keys."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ContractError(f"{path}: config must be a JSON object")
    known = set(MEMORY_KEYS) | set(RUN_KEYS) | {f.name for f in fields(ModelConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ContractError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def model_config(doc: dict) -> ModelConfig:
    return ModelConfig(**{f.name: doc[f.name] for f in fields(ModelConfig) if f.name in doc})


def memory_override(doc: dict, routed: MemoryConfig) -> MemoryConfig | None:
    """Routed settings with any explicitly configured fields replaced."""
    given = {k: int(doc[k]) for k in MEMORY_KEYS if doc.get(k) is not None}
    if not given:
        return None
    merged = {k: getattr(routed, k) for k in MEMORY_KEYS} | given
    return MemoryConfig(**merged)
