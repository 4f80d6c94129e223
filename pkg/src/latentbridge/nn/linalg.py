"""Thin SVD by one-sided (Hestenes) Jacobi rotations."""

from __future__ import annotations

import numpy as np

_TOL = 1e-15
_MAX_SWEEPS = 100


def _round_robin(n: int):
    """Pairings for n players (n even) such that each round's pairs are disjoint."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        top = players[: n // 2]
        bottom = players[n // 2 :][::-1]
        rounds.append((np.array(top), np.array(bottom)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _orthonormal_complement(u: np.ndarray, count: int) -> np.ndarray:
    m, k = u.shape
    q, _ = np.linalg.qr(np.hstack([u, np.eye(m)]))
    return q[:, k : k + count]


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(U, sigma, V)`` with ``a == U @ diag(sigma) @ V.T``.

    ``sigma`` has length ``min(m, n)`` and is sorted in descending order; U and
    V have orthonormal columns. Columns are rotated pairwise in a round-robin
    order so each round is one vectorised update over disjoint pairs.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ValueError(f"svd needs a non-empty matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite values")
    if a.shape[0] < a.shape[1]:
        u, s, v = svd(a.T)
        return v, s, u

    m, n = a.shape
    n_pad = n + (n % 2)
    w = np.zeros((m, n_pad))
    w[:, :n] = a
    v = np.eye(n_pad)
    rounds = _round_robin(n_pad) if n_pad > 1 else []

    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            wp, wq = w[:, p], w[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            active = np.abs(gamma) > _TOL * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(active, c * t, 0.0)
            w[:, p], w[:, q] = c * wp - s * wq, s * wp + c * wq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break

    w, v = w[:, :n], v[:n, :n]
    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, w, v = sigma[order], w[:, order], v[:, order]

    good = sigma > max(sigma[0], 1e-300) * 1e-13
    u = np.zeros_like(w)
    u[:, good] = w[:, good] / sigma[good]
    if not good.all():
        u[:, ~good] = _orthonormal_complement(u[:, good], int((~good).sum()))
    return u, sigma, v
