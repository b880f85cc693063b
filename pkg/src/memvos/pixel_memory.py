"""Pixel memory: per-frame keys and per-object values with top-k readout.

Every processed frame contributes one :class:`MemoryFrame`.  The first
(annotated) frame is permanent; the rest are evicted oldest-first once more
than ``max_mem_frames`` of them are held, down to ``min_mem_frames``.

Readout scores each query position against every stored position with a
scaled dot product, keeps the ``top_k`` best per query (ties go to the lower
memory position), softmaxes over the kept set and averages the values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import DTYPE, ContractError, linear

LONG_VIDEO_THRESHOLD = 200


@dataclass(frozen=True)
class MemoryConfig:
    max_mem_frames: int
    min_mem_frames: int
    top_k: int

    def __post_init__(self):
        if not 1 <= self.min_mem_frames <= self.max_mem_frames:
            raise ContractError(
                f"need 1 <= min_mem_frames <= max_mem_frames, got {self.min_mem_frames}, {self.max_mem_frames}"
            )
        if self.top_k < 1:
            raise ContractError(f"top_k must be >= 1, got {self.top_k}")


SHORT_VIDEO_CONFIG = MemoryConfig(max_mem_frames=15, min_mem_frames=14, top_k=30)
LONG_VIDEO_CONFIG = MemoryConfig(max_mem_frames=45, min_mem_frames=40, top_k=40)


def route_hyperparams(num_frames: int) -> MemoryConfig:
    """Memory settings by video length; 200 frames or more counts as long."""
    if num_frames < 1:
        raise ContractError(f"num_frames must be >= 1, got {num_frames}")
    return SHORT_VIDEO_CONFIG if num_frames < LONG_VIDEO_THRESHOLD else LONG_VIDEO_CONFIG


@dataclass
class MemoryFrame:
    """Memory contributed by one segmented frame.

    Attributes:
        frame_index: index of the source frame in the video.
        keys: ``(P, Ck)`` keys on the stride-16 grid, shared by all objects.
        values: object id -> ``(P, Cv)`` encoded mask features.
        pooled_sums: object id -> ``(N, Cv)`` mask-pooled feature sums.
        pooled_weights: object id -> ``(N,)`` pooling-mask masses.
    """

    frame_index: int
    keys: np.ndarray
    values: dict[int, np.ndarray]
    pooled_sums: dict[int, np.ndarray] = field(default_factory=dict)
    pooled_weights: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        p = self.keys.shape[0]
        for oid, v in self.values.items():
            if v.shape[0] != p:
                raise ContractError(f"object {oid}: values have {v.shape[0]} rows, keys have {p}")

    @property
    def num_positions(self) -> int:
        return self.keys.shape[0]


@dataclass
class MemoryBank:
    frames: list[MemoryFrame] = field(default_factory=list)
    permanent_count: int = 0

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def non_permanent_count(self) -> int:
        return len(self.frames) - self.permanent_count

    @property
    def frame_indices(self) -> list[int]:
        return [f.frame_index for f in self.frames]

    def add(self, frame: MemoryFrame, permanent: bool = False) -> "MemoryBank":
        if self.frames and frame.frame_index <= self.frames[-1].frame_index:
            raise ContractError(
                f"frame {frame.frame_index} is not newer than stored frame {self.frames[-1].frame_index}"
            )
        if permanent and self.non_permanent_count:
            raise ContractError("permanent frames can only be added before any regular frame")
        self.frames.append(frame)
        if permanent:
            self.permanent_count += 1
        return self

    def evict(self, cfg: MemoryConfig) -> list[int]:
        """Drop the oldest regular frames if over capacity; returns dropped frame indices."""
        n = self.non_permanent_count
        if n <= cfg.max_mem_frames:
            return []
        drop = n - cfg.min_mem_frames
        start = self.permanent_count
        removed = [f.frame_index for f in self.frames[start:start + drop]]
        del self.frames[start:start + drop]
        return removed

    def object_ids(self) -> set[int]:
        ids: set[int] = set()
        for f in self.frames:
            ids.update(f.values)
        return ids

    def keys(self) -> np.ndarray:
        return np.concatenate([f.keys for f in self.frames], axis=0)

    def values(self, object_id: int) -> np.ndarray:
        if not self.frames:
            raise ContractError("memory bank is empty")
        try:
            return np.concatenate([f.values[object_id] for f in self.frames], axis=0)
        except KeyError:
            raise ContractError(f"object {object_id} missing from a memory frame") from None


def add_frame(bank: MemoryBank, frame: MemoryFrame, permanent: bool = False) -> MemoryBank:
    return bank.add(frame, permanent)


def evict(bank: MemoryBank, cfg: MemoryConfig) -> MemoryBank:
    bank.evict(cfg)
    return bank


# chunk budget for the (rows x M) affinity block
_CHUNK_ELEMS = 1 << 22


def topk_attention(query_keys, mem_keys, top_k: int) -> tuple[np.ndarray, np.ndarray]:
    """Sparse top-k attention.

    Returns ``(indices, weights)``, both ``(P, k)`` with ``k = min(top_k, M)``;
    indices are ascending within each row and weights sum to one per row.
    """
    q = np.asarray(query_keys, dtype=DTYPE)
    keys = np.asarray(mem_keys, dtype=DTYPE)
    if q.shape[1] != keys.shape[1]:
        raise ContractError(f"query key width {q.shape[1]} != memory key width {keys.shape[1]}")
    m = keys.shape[0]
    k = min(top_k, m)
    scale = DTYPE(1.0 / math.sqrt(keys.shape[1]))
    keys_t = np.ascontiguousarray(keys.T)
    rows = max(1, _CHUNK_ELEMS // m)

    idx_out = np.empty((q.shape[0], k), dtype=np.intp)
    w_out = np.empty((q.shape[0], k), dtype=DTYPE)
    for s in range(0, q.shape[0], rows):
        aff = (q[s:s + rows] @ keys_t) * scale
        if k == m:
            idx = np.broadcast_to(np.arange(m), aff.shape)
            kept = aff
        else:
            idx = _select_topk(aff, k)
            kept = np.take_along_axis(aff, idx, axis=1)
        e = np.exp(kept - kept.max(axis=1, keepdims=True))
        idx_out[s:s + rows] = idx
        w_out[s:s + rows] = e / e.sum(axis=1, keepdims=True)
    return idx_out, w_out


def _select_topk(aff: np.ndarray, k: int) -> np.ndarray:
    m = aff.shape[1]
    part = np.argpartition(aff, m - k, axis=1)
    idx = np.sort(part[:, m - k:], axis=1)
    thresh = np.take_along_axis(aff, part[:, m - k:m - k + 1], axis=1)
    # rows where the k-th value is tied across the cut need the ordered tie-break
    ambiguous = np.flatnonzero((aff >= thresh).sum(axis=1) > k)
    if ambiguous.size:
        sub, t = aff[ambiguous], thresh[ambiguous]
        tied = sub == t
        need = k - (sub > t).sum(axis=1, keepdims=True)
        # lower positions win among values equal to the k-th largest
        keep = (sub > t) | (tied & (np.cumsum(tied, axis=1) <= need))
        idx[ambiguous] = np.nonzero(keep)[1].reshape(ambiguous.size, k)
    return idx


def attention_matrix(query_keys, mem_keys, top_k: int) -> np.ndarray:
    """Dense ``(P, M)`` top-k attention weights (zeros outside the kept set)."""
    idx, w = topk_attention(query_keys, mem_keys, top_k)
    dense = np.zeros((idx.shape[0], np.asarray(mem_keys).shape[0]), dtype=DTYPE)
    np.put_along_axis(dense, idx, w, axis=1)
    return dense


def attend(query_keys, mem_keys, mem_values, top_k: int) -> np.ndarray:
    """Top-k attended values ``(P, Cv)``.

    Query rows with identical keys share one attention computation.
    """
    q = np.asarray(query_keys, dtype=DTYPE)
    values = np.asarray(mem_values, dtype=DTYPE)
    uniq, inverse = np.unique(q, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    idx, w = topk_attention(uniq, mem_keys, top_k)
    out = np.empty((uniq.shape[0], values.shape[1]), dtype=DTYPE)
    rows = max(1, _CHUNK_ELEMS // (idx.shape[1] * values.shape[1]))
    for s in range(0, uniq.shape[0], rows):
        gathered = values[idx[s:s + rows]]
        out[s:s + rows] = np.einsum("rk,rkc->rc", w[s:s + rows], gathered)
    return out[inverse]


@dataclass
class KeyProjection:
    """Seeded linear map from stride-16 features to memory keys.

    With ``normalize`` the projected keys are L2-normalised and scaled by
    ``gain``, which turns dot-product affinity into a cosine similarity.
    """

    weight: np.ndarray
    center: float = 0.0
    normalize: bool = False
    gain: float = 1.0

    @classmethod
    def generate(cls, seed: int, in_dim: int, key_dim: int = 32, **kw) -> "KeyProjection":
        rng = np.random.default_rng([seed, 0x4E7])
        w = (rng.standard_normal((in_dim, key_dim)) / math.sqrt(in_dim)).astype(DTYPE)
        return cls(w, **kw)

    @property
    def key_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, features) -> np.ndarray:
        k = linear(np.asarray(features, dtype=DTYPE) - DTYPE(self.center), self.weight)
        if self.normalize:
            norm = np.sqrt((k * k).sum(axis=1, keepdims=True))
            k = k / np.maximum(norm, DTYPE(1e-12)) * DTYPE(self.gain)
        return k.astype(DTYPE, copy=False)


@dataclass
class ReadoutWeights:
    """Projection of ``concat(attended value, query feature)`` to the readout width."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def generate(cls, seed: int, value_dim: int, query_dim: int, out_dim: int) -> "ReadoutWeights":
        rng = np.random.default_rng([seed, 0x2EAD])
        fan_in = value_dim + query_dim
        w = (rng.standard_normal((fan_in, out_dim)) / math.sqrt(fan_in)).astype(DTYPE)
        return cls(w, np.zeros(out_dim, DTYPE))

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


def read_memory(
    bank: MemoryBank,
    query_keys,
    object_id: int,
    query_f16,
    cfg: MemoryConfig,
    readout: ReadoutWeights,
) -> np.ndarray:
    """Pixel readout ``(P, C)`` for one object of the query frame."""
    if not bank.frames:
        raise ContractError("cannot read from an empty memory bank")
    values = bank.values(object_id)
    attended = attend(query_keys, bank.keys(), values, cfg.top_k)
    feats = np.concatenate([attended, np.asarray(query_f16, dtype=DTYPE)], axis=1)
    return linear(feats, readout.weight, readout.bias)
