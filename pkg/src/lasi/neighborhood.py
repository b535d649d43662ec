"""Causal neighborhoods under raster-scan order.

An offset (dr, dc) is causal when dr < 0, or dr == 0 and dc < 0. Offsets are
ranked by L1 norm; ties go to whichever pixel comes first in raster order,
which for offsets from a common site means ascending (dr, dc).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

Offset = tuple[int, int]


def manhattan(a: tuple[int, int], b: tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def is_causal(offset: Offset) -> bool:
    dr, dc = offset
    return dr < 0 or (dr == 0 and dc < 0)


@lru_cache(maxsize=None)
def build_offsets(n: int) -> tuple[Offset, ...]:
    """The ``n`` closest causal offsets, nearest first."""
    if n < 1:
        raise ValueError(f"neighborhood size must be >= 1, got {n}")
    # there are 2d causal offsets at L1 distance d, so radius R holds R(R+1)
    radius = 1
    while radius * (radius + 1) < n:
        radius += 1
    cands = []
    for dr in range(-radius, 1):
        for dc in range(-radius, radius + 1):
            if is_causal((dr, dc)) and abs(dr) + abs(dc) <= radius:
                cands.append((abs(dr) + abs(dc), dr, dc))
    cands.sort()
    return tuple((dr, dc) for _, dr, dc in cands[:n])


def reach(offsets) -> int:
    """Largest |dr| or |dc| among the offsets (padding width needed)."""
    return max(max(abs(dr), abs(dc)) for dr, dc in offsets)


def gather_neighborhood(plane, site: tuple[int, int], offsets, pad: float = 0.5) -> np.ndarray:
    """Values at ``site + offset`` for each offset, ``pad`` where out of bounds."""
    plane = np.asarray(plane)
    h, w = plane.shape
    r, c = site
    if not (0 <= r < h and 0 <= c < w):
        raise IndexError(f"site {site} outside {h}x{w} plane")
    out = np.full(len(offsets), pad, dtype=np.float64)
    for j, (dr, dc) in enumerate(offsets):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w:
            out[j] = plane[rr, cc]
    return out


def neighborhood_features(plane, offsets, pad: float = 0.5) -> np.ndarray:
    """Gather every site at once: returns an (H, W, N) array."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    m = reach(offsets)
    padded = np.full((h + m, w + 2 * m), pad, dtype=np.float64)
    padded[m:, m : m + w] = plane
    feats = np.empty((h, w, len(offsets)), dtype=np.float64)
    for j, (dr, dc) in enumerate(offsets):
        feats[:, :, j] = padded[m + dr : m + dr + h, m + dc : m + dc + w]
    return feats


def scatter_features(grad_feats: np.ndarray, offsets) -> np.ndarray:
    """Adjoint of :func:`neighborhood_features` with respect to the plane.

    Padding is constant, so its gradient is simply dropped.
    """
    h, w, _ = grad_feats.shape
    m = reach(offsets)
    padded = np.zeros((h + m, w + 2 * m), dtype=np.float64)
    for j, (dr, dc) in enumerate(offsets):
        padded[m + dr : m + dr + h, m + dc : m + dc + w] += grad_feats[:, :, j]
    return padded[m:, m : m + w].copy()
