"""Per-frame segmentation output shared by the decoder, fusion and I/O."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import DTYPE, ContractError


def labels_from_probabilities(probs: np.ndarray, object_ids) -> np.ndarray:
    """Argmax label map over ``[background, objects...]``; ties go to the lower label.

    Background probability is taken as ``1 - sum(objects)``.
    """
    ids = np.asarray((0, *object_ids), dtype=np.uint8)
    if probs.shape[0] == 0:
        return np.zeros(probs.shape[1:], dtype=np.uint8)
    bg = DTYPE(1) - probs.sum(axis=0, dtype=DTYPE)
    stacked = np.concatenate([bg[None], probs], axis=0)
    # object ids are ascending, so "first max" is also "lowest label"
    return ids[np.argmax(stacked, axis=0)]


@dataclass
class SegmentationResult:
    """Label map plus per-object soft probabilities for one frame.

    Attributes:
        label_map: ``(H, W)`` uint8, 0 is background.
        probabilities: ``(K, H, W)`` float32, plane ``k`` belongs to ``object_ids[k]``.
        object_ids: ascending positive ids.
    """

    label_map: np.ndarray
    probabilities: np.ndarray
    object_ids: tuple[int, ...]
    frame_index: int = 0
    video_id: str = ""
    run_id: str = ""

    def __post_init__(self):
        self.object_ids = tuple(int(i) for i in self.object_ids)
        if list(self.object_ids) != sorted(set(self.object_ids)):
            raise ContractError(f"object ids must be unique and ascending, got {self.object_ids}")
        if self.probabilities.shape != (len(self.object_ids), *self.label_map.shape):
            raise ContractError(
                f"probabilities {self.probabilities.shape} do not match {len(self.object_ids)} objects "
                f"on a {self.label_map.shape} label map"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.label_map.shape

    @property
    def background(self) -> np.ndarray:
        return DTYPE(1) - self.probabilities.sum(axis=0, dtype=DTYPE)

    def probability(self, object_id: int) -> np.ndarray:
        return self.probabilities[self.object_ids.index(object_id)]

    def with_meta(self, **kw) -> "SegmentationResult":
        return replace(self, **kw)

    @classmethod
    def from_probabilities(cls, probs, object_ids, **meta) -> "SegmentationResult":
        probs = np.ascontiguousarray(probs, dtype=DTYPE)
        ids = tuple(int(i) for i in object_ids)
        return cls(labels_from_probabilities(probs, ids), probs, ids, **meta)

    @classmethod
    def from_label_map(cls, label_map, object_ids=None, **meta) -> "SegmentationResult":
        """Hard one-hot result for an indexed label map."""
        label_map = np.asarray(label_map, dtype=np.uint8)
        if object_ids is None:
            object_ids = [int(i) for i in np.unique(label_map) if i]
        ids = tuple(int(i) for i in object_ids)
        probs = np.stack([(label_map == i) for i in ids]).astype(DTYPE) if ids else \
            np.zeros((0, *label_map.shape), DTYPE)
        return cls(label_map.copy(), probs, ids, **meta)
