"""Normalization and reconstruction metrics for (N, 3) point arrays."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def as_cloud(pc) -> np.ndarray:
    pts = np.asarray(pc, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
        raise ValueError(f"point cloud must have shape (N>=1, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def normalize(pc) -> np.ndarray:
    """Center the bounding box at the origin and scale the largest half-extent to 1.

    A cloud whose points all coincide collapses to the origin.
    """
    pts = as_cloud(pc)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    half = 0.5 * (hi - lo).max()
    if half == 0.0:
        return np.zeros_like(pts)
    return (pts - 0.5 * (lo + hi)) / half


def _nn_sq(src: np.ndarray, dst: np.ndarray):
    """Squared distance from each src point to its nearest dst point, plus the index."""
    _, idx = cKDTree(dst).query(src, k=1)
    diff = src - dst[idx]
    return np.einsum("ij,ij->i", diff, diff), idx


def chamfer(a, b) -> float:
    """Mean squared nearest-neighbour distance a->b plus b->a."""
    a, b = as_cloud(a), as_cloud(b)
    d_ab, _ = _nn_sq(a, b)
    d_ba, _ = _nn_sq(b, a)
    return float(d_ab.mean() + d_ba.mean())


def chamfer_and_grad(pred: np.ndarray, target: np.ndarray):
    """Chamfer distance and its gradient with respect to ``pred``."""
    d_pt, idx_pt = _nn_sq(pred, target)
    d_tp, idx_tp = _nn_sq(target, pred)
    n_p, n_t = len(pred), len(target)
    grad = 2.0 * (pred - target[idx_pt]) / n_p
    np.add.at(grad, idx_tp, 2.0 * (pred[idx_tp] - target) / n_t)
    return float(d_pt.mean() + d_tp.mean()), grad


def knn_spread(pc: np.ndarray, k: int) -> np.ndarray:
    """Per-point variance of the distances to its k nearest neighbours (self included)."""
    dist, _ = cKDTree(pc).query(pc, k=k)
    return dist.var(axis=1)


def _directional_sim(fa, fb_at_nn):
    top = np.maximum(fa, fb_at_nn)
    rel = np.divide(np.abs(fa - fb_at_nn), top, out=np.zeros_like(top), where=top > 0)
    return float(np.mean(1.0 - rel))


def pointsim(a, b, k: int = 8) -> float:
    """Local-structure similarity in [0, 1]; 1 for identical clouds.

    Each point gets the variance of its k-NN distances (itself counted as one
    of the k). A point in ``a`` is compared to its nearest neighbour in ``b``
    through ``1 - |fa - fb| / max(fa, fb)`` (1 when both are zero). The score
    averages that over ``a``, does the same from ``b`` to ``a``, and returns the
    mean of the two directions.
    """
    a, b = as_cloud(a), as_cloud(b)
    if not (2 <= k <= min(len(a), len(b))):
        raise ValueError(f"k must satisfy 2 <= k <= min(N_a, N_b) = {min(len(a), len(b))}, got {k}")
    fa, fb = knn_spread(a, k), knn_spread(b, k)
    _, ab = cKDTree(b).query(a, k=1)
    _, ba = cKDTree(a).query(b, k=1)
    return 0.5 * (_directional_sim(fa, fb[ab]) + _directional_sim(fb, fa[ba]))
