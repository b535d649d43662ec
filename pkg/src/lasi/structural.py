"""SSIM and MS-SSIM on [0, 1] images, with gradients.

Standard constants: 11-tap Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
statistics averaged over valid window positions. MS-SSIM uses 2x2 average
pooling between scales and the usual five exponents; when the image is too
small for five scales the exponents of the scales that fit are renormalized.
Negative per-scale contrast-structure means are clamped to zero before the
fractional powers are taken.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WINDOW = 11
SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
MS_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])


def gaussian_kernel(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


_G = gaussian_kernel()


def _filter(x: np.ndarray) -> np.ndarray:
    """Separable valid-mode Gaussian correlation of a 2-D plane."""
    t = sliding_window_view(x, WINDOW, axis=0) @ _G
    return sliding_window_view(t, WINDOW, axis=1) @ _G


def _filter_adjoint(g: np.ndarray) -> np.ndarray:
    # the kernel is symmetric, so the adjoint is a full-mode correlation
    p = WINDOW - 1
    return _filter(np.pad(g, p))


def _check(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape[:2]) < WINDOW:
        raise ValueError(f"image {x.shape[:2]} smaller than the {WINDOW}x{WINDOW} window")


def _stats(x, y):
    mx, my = _filter(x), _filter(y)
    sxx = _filter(x * x) - mx * mx
    syy = _filter(y * y) - my * my
    sxy = _filter(x * y) - mx * my
    a1, b1 = 2 * mx * my + C1, mx * mx + my * my + C1
    a2, b2 = 2 * sxy + C2, sxx + syy + C2
    return mx, my, a1, b1, a2, b2


def _plane_terms(x, y, with_luminance: bool, want_grad: bool):
    """Mean of the SSIM map (or of the cs map) and its gradient wrt ``y``."""
    mx, my, a1, b1, a2, b2 = _stats(x, y)
    cs = a2 / b2
    smap = (a1 / b1) * cs if with_luminance else cs
    value = smap.mean()
    if not want_grad:
        return value, None
    scale = smap / smap.size
    d_my = scale * (-2 * mx / a2 + 2 * my / b2)
    if with_luminance:
        d_my = d_my + scale * (2 * mx / a1 - 2 * my / b1)
    d_exy = scale * 2 / a2
    d_eyy = -scale / b2
    grad = _filter_adjoint(d_my) + 2 * y * _filter_adjoint(d_eyy) + x * _filter_adjoint(d_exy)
    return value, grad


def _pool(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    return 0.25 * (x[0:h:2, 0:w:2] + x[1:h:2, 0:w:2] + x[0:h:2, 1:w:2] + x[1:h:2, 1:w:2])


def _pool_adjoint(g: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    h, w = g.shape
    for dr in (0, 1):
        for dc in (0, 1):
            out[dr : 2 * h : 2, dc : 2 * w : 2] += 0.25 * g
    return out


def n_scales(shape) -> int:
    h, w = shape[:2]
    m = 0
    while m < len(MS_WEIGHTS) and min(h, w) >= WINDOW:
        m += 1
        h, w = h // 2, w // 2
    return m


def ssim_plane(x, y, want_grad=False):
    return _plane_terms(x, y, True, want_grad)


def ms_ssim_plane(x, y, want_grad=False):
    m = n_scales(x.shape)
    weights = MS_WEIGHTS[:m] / MS_WEIGHTS[:m].sum()
    xs, ys = [x], [y]
    for _ in range(m - 1):
        xs.append(_pool(xs[-1]))
        ys.append(_pool(ys[-1]))
    vals, grads = [], []
    for j in range(m):
        v, g = _plane_terms(xs[j], ys[j], j == m - 1, want_grad)
        vals.append(v)
        grads.append(g)
    vals = np.array(vals)
    clamped = np.maximum(vals, 0.0)
    value = float(np.prod(clamped**weights))
    if not want_grad:
        return value, None
    if value == 0.0:
        return value, np.zeros_like(y)
    # d value = value * sum_j w_j dv_j / v_j, pulled back through the pooling chain
    acc = np.zeros_like(ys[-1])
    for j in range(m - 1, -1, -1):
        acc = acc + value * weights[j] / vals[j] * grads[j]
        if j > 0:
            acc = _pool_adjoint(acc, ys[j - 1].shape)
    return value, acc


def _over_channels(fn, x, y, want_grad):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check(x, y)
    c = x.shape[2]
    vals, grads = [], []
    for ch in range(c):
        v, g = fn(x[:, :, ch], y[:, :, ch], want_grad)
        vals.append(v)
        grads.append(g)
    value = float(np.mean(vals))
    if not want_grad:
        return value
    return value, np.stack(grads, axis=2) / c


def ssim(x, y) -> float:
    return _over_channels(ssim_plane, x, y, False)


def ms_ssim(x, y) -> float:
    return _over_channels(ms_ssim_plane, x, y, False)


def ssim_grad(x, y) -> np.ndarray:
    """Gradient of ``ssim(x, y)`` with respect to ``y``; SSIM is symmetric."""
    return _over_channels(ssim_plane, x, y, True)[1]


def ms_ssim_grad(x, y) -> np.ndarray:
    return _over_channels(ms_ssim_plane, x, y, True)[1]
