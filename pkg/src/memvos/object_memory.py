"""Object memory: a compact ``N x C`` summary of each object.

The summary is a mask-weighted average of encoded object features over all
memory frames.  Each memory frame stores its own pooled sums and mask masses
so the summary can be recomputed cheaply after every insertion or eviction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DTYPE, ContractError
from .pixel_memory import MemoryBank

POOL_EPS = 1e-7


@dataclass
class ObjectState:
    object_id: int
    queries: np.ndarray
    memory: np.ndarray


def pooling_statistics(features, masks) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame pooling terms: ``(W @ U, W.sum(1))`` accumulated in float64."""
    u = np.asarray(features, dtype=np.float64)
    w = np.asarray(masks, dtype=np.float64)
    if u.ndim != 2 or w.ndim != 2 or w.shape[1] != u.shape[0]:
        raise ContractError(f"pooling masks {w.shape} do not match features {u.shape}")
    return w @ u, w.sum(axis=1)


def _normalize(sums: np.ndarray, mass: np.ndarray) -> np.ndarray:
    return (sums / np.maximum(mass, POOL_EPS)[:, None]).astype(DTYPE)


def mask_pool(features, masks) -> np.ndarray:
    """Weighted average of ``(M, C)`` features under ``(N, M)`` masks in [0, 1].

    Rows with zero mass give the zero vector.
    """
    w = np.asarray(masks)
    if w.size and (w.min() < 0 or w.max() > 1):
        raise ContractError("pooling masks must lie in [0, 1]")
    return _normalize(*pooling_statistics(features, w))


def pooling_windows(n_windows: int, grid_shape: tuple[int, int], seed: int = 0) -> np.ndarray:
    """Fixed smooth spatial windows ``(n_windows, h*w)`` with values in (0, 1].

    The first window is uniform; the others are Gaussian bumps at seeded
    centres, so every grid cell has positive total weight.
    """
    h, w = grid_shape
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    rng = np.random.default_rng([seed, 0x9001])
    windows = [np.ones(h * w)]
    for _ in range(n_windows - 1):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.3**2))
        windows.append(bump.reshape(-1))
    return np.stack(windows).astype(DTYPE)


def derive_pooling_masks(soft_mask, n: int, grid_shape: tuple[int, int] | None = None, seed: int = 0) -> np.ndarray:
    """``n`` pooling masks from one soft mask: half foreground, half background.

    Args:
        soft_mask: ``(P,)`` object probability on the memory grid.
        n: number of masks, even and at least 2.
        grid_shape: ``(h, w)`` with ``h * w == P``; a single row if omitted.
        seed: selects the window centres.
    """
    m = np.asarray(soft_mask, dtype=DTYPE).reshape(-1)
    if n < 2 or n % 2:
        raise ContractError(f"number of pooling masks must be even and >= 2, got {n}")
    if grid_shape is None:
        grid_shape = (1, m.size)
    if grid_shape[0] * grid_shape[1] != m.size:
        raise ContractError(f"grid {grid_shape} does not hold {m.size} positions")
    windows = pooling_windows(n // 2, grid_shape, seed)
    fg = windows * m
    bg = windows * (DTYPE(1) - m)
    return np.clip(np.concatenate([fg, bg]), 0.0, 1.0).astype(DTYPE)


def object_summary(bank: MemoryBank, object_id: int) -> np.ndarray:
    """Object memory ``S`` pooled over every frame currently in ``bank``."""
    sums = None
    mass = None
    for frame in bank.frames:
        if object_id not in frame.pooled_sums:
            continue
        if sums is None:
            sums = np.zeros_like(frame.pooled_sums[object_id], dtype=np.float64)
            mass = np.zeros_like(frame.pooled_weights[object_id], dtype=np.float64)
        sums += frame.pooled_sums[object_id]
        mass += frame.pooled_weights[object_id]
    if sums is None:
        raise ContractError(f"no object-memory statistics for object {object_id}")
    return _normalize(sums, mass)
