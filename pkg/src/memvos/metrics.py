"""Region (J) and boundary (F) accuracy of binary masks, and their J&F summary."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .numerics import ContractError

BOUNDARY_TOL_FRACTION = 0.008


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ContractError(f"mask extents differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def jaccard(pred, gt) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    pred, gt = _pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary(mask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour or on the image border."""
    mask = np.asarray(mask).astype(bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~interior


def default_tolerance(shape) -> int:
    return math.ceil(BOUNDARY_TOL_FRACTION * math.hypot(*shape[:2]))


def _matched_fraction(src: np.ndarray, dst: np.ndarray, tol: float) -> float:
    # distance from every pixel to the nearest dst boundary pixel
    dist = ndimage.distance_transform_edt(~dst)
    return np.count_nonzero(dist[src] <= tol) / np.count_nonzero(src)


def boundary_f(pred, gt, tol: float | None = None) -> float:
    """Boundary F-measure with a Euclidean matching tolerance in pixels.

    Precision is the share of predicted boundary pixels within ``tol`` of the
    ground-truth boundary, recall the converse.  ``tol`` defaults to
    ``ceil(0.008 * image diagonal)``.
    """
    pred, gt = _pair(pred, gt)
    if tol is None:
        tol = default_tolerance(pred.shape)
    if tol < 0:
        raise ContractError(f"tolerance must be >= 0, got {tol}")
    bp, bg = boundary(pred), boundary(gt)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    precision = _matched_fraction(bp, bg, tol)
    recall = _matched_fraction(bg, bp, tol)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def jf_score(j_values, f_values) -> dict[str, float]:
    """Mean J, mean F and their average, on a 0-100 scale.

    Inputs are per-frame, per-object scores in [0, 1] for the frames being
    scored; leaving out the annotated first frame is the caller's job.
    """
    j = np.asarray(j_values, dtype=np.float64).ravel()
    f = np.asarray(f_values, dtype=np.float64).ravel()
    if j.size == 0 or f.size == 0:
        raise ContractError("no scores to summarise")
    mj = float(100.0 * j.mean())
    mf = float(100.0 * f.mean())
    return {"J": mj, "F": mf, "JF": (mj + mf) / 2}


def evaluate_video(pred_maps, gt_maps, object_ids=None) -> dict[str, float]:
    """Score a predicted label-map sequence against ground truth.

    Frame 0 is skipped because it carries the given annotation; a one-frame
    video is scored on that frame alone.  Objects default to the ids present
    in the first ground-truth frame.
    """
    pred_maps = [np.asarray(p) for p in pred_maps]
    gt_maps = [np.asarray(g) for g in gt_maps]
    if len(pred_maps) != len(gt_maps):
        raise ContractError(f"{len(pred_maps)} predicted frames for {len(gt_maps)} ground-truth frames")
    if not gt_maps:
        raise ContractError("empty video")
    if object_ids is None:
        object_ids = [int(i) for i in np.unique(gt_maps[0]) if i]
    frames = range(1, len(gt_maps)) if len(gt_maps) > 1 else range(1)
    js, fs = [], []
    for t in frames:
        for oid in object_ids:
            p, g = pred_maps[t] == oid, gt_maps[t] == oid
            js.append(jaccard(p, g))
            fs.append(boundary_f(p, g))
    if not js:
        # no objects annotated: an all-background prediction is perfect
        js = [jaccard(pred_maps[t] > 0, gt_maps[t] > 0) for t in frames]
        fs = [boundary_f(pred_maps[t] > 0, gt_maps[t] > 0) for t in frames]
    return jf_score(js, fs)
