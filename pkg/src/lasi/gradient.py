"""Gradients of every metric with respect to either input, plus a finite-difference checker.

The LASI gradient is a hand-written reverse pass. With w = pinv(A) b for a
symmetric A (P = pinv(A), P0 = I - P A, r = b - A w), the differential is

    dw = -P dA w + P P dA r + P0 dA P w + P db

whose adjoint gives per-pixel cotangents for A and b. Those are pulled back
through the weighted causal sum (its adjoint is the same sum run over later
pixels), the rank-one products, and the neighborhood gather.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import structural as _ssim
from .imageio import as_array
from .metrics import MetricId, _pair, evaluate
from .neighborhood import scatter_features
from .wls import ChannelMode, LasiConfig, Problem, _assemble, anticausal_decay_sum, solve_all


class Wrt(Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class GradientReport:
    analytic: np.ndarray
    fd: np.ndarray
    max_rel_err: float
    max_abs_err: float


def embedding_vjp(problems: list[Problem], cot: list[np.ndarray], cfg: LasiConfig, shape) -> np.ndarray:
    """Pull cotangents on each problem's embeddings back to the image."""
    h, w, ch = shape
    grad = np.zeros(shape)
    offsets = cfg.offsets
    for idx, (p, gw) in enumerate(zip(problems, cot)):
        P, wv, A, b, f = p.pinv, p.w, p.a_bar, p.b_bar, p.feats
        mv = lambda m, v: np.einsum("...ij,...j->...i", m, v)  # noqa: E731
        v = mv(P, gw)
        r = b - mv(A, wv)
        null_g = gw - mv(P, mv(A, gw))
        ga = (-v[..., :, None] * wv[..., None, :]
              + mv(P, v)[..., :, None] * r[..., None, :]
              + null_g[..., :, None] * mv(P, wv)[..., None, :])
        ga = anticausal_decay_sum(ga, cfg.omega)
        gb = anticausal_decay_sum(v, cfg.omega)
        gf = p.mult * mv(ga + np.swapaxes(ga, -1, -2), f) + p.target[..., None] * gb
        gt = np.einsum("...i,...i->...", gb, f)
        if cfg.channel_mode is ChannelMode.PER_CHANNEL:
            grad[:, :, idx] += gt + scatter_features(gf, offsets)
        else:
            gf = gf.reshape(h, w, len(offsets), ch)
            for c in range(ch):
                grad[:, :, c] += gt + scatter_features(gf[:, :, :, c], offsets)
    return grad


def _split_cotangent(g_weights: np.ndarray, cfg: LasiConfig, shape) -> list[np.ndarray]:
    h, w, ch = shape
    if cfg.channel_mode is ChannelMode.PER_CHANNEL:
        g = g_weights.reshape(h, w, ch, -1)
        return [g[:, :, c] for c in range(ch)]
    return [g_weights.reshape(h, w, -1)]


def lasi_grad(x, y, cfg: LasiConfig = LasiConfig(), threads: int | None = None) -> np.ndarray:
    """Gradient of ``lasi_distance(x, y)`` with respect to ``y``.

    Pixels whose two embeddings coincide contribute zero (subgradient choice).
    """
    x, y = _pair(x, y)
    ex = _assemble(solve_all(x, cfg, threads), x.shape, cfg)
    probs_y = solve_all(y, cfg, threads)
    ey = _assemble(probs_y, y.shape, cfg)
    diff = ey.weights - ex.weights
    norm = np.linalg.norm(diff, axis=1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    cot = np.where(norm > 0, diff / safe, 0.0) / diff.shape[0]
    return embedding_vjp(probs_y, _split_cotangent(cot, cfg, y.shape), cfg, y.shape)


def _grad_second(metric: MetricId, x, y, threads=None) -> np.ndarray:
    if metric.kind == "lasi":
        return lasi_grad(x, y, metric.config, threads)
    x, y = _pair(x, y)
    if metric.kind == "mse":
        return 2.0 * (y - x) / y.size
    if metric.kind == "psnr":
        m = float(np.mean((x - y) ** 2))
        if m == 0.0:
            raise ValueError("PSNR is not differentiable at identical images")
        return -10.0 / np.log(10.0) * (2.0 * (y - x) / y.size) / m
    if metric.kind == "ssim":
        return _ssim.ssim_grad(x, y)
    return _ssim.ms_ssim_grad(x, y)


def grad_metric(metric: MetricId, x, y, wrt: Wrt = Wrt.SECOND, threads: int | None = None) -> np.ndarray:
    """Gradient of the metric's native value; shape (H, W, C) of the chosen argument.

    Every metric here is symmetric, so the gradient in the first argument is
    the second-argument gradient with the inputs swapped.
    """
    wrt = Wrt(wrt)
    g = _grad_second(metric, y, x, threads) if wrt is Wrt.FIRST else _grad_second(metric, x, y, threads)
    if not np.all(np.isfinite(g)):
        raise ArithmeticError(f"non-finite gradient for {metric}")
    return g


def fd_gradient(metric: MetricId, x, y, wrt: Wrt = Wrt.SECOND, step: float = 1e-4) -> np.ndarray:
    """Central differences, one coordinate at a time. No clamping to [0, 1]."""
    if not step > 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    x, y = _pair(x, y)
    base = (x if Wrt(wrt) is Wrt.FIRST else y).copy()
    fd = np.zeros_like(base)
    flat = base.reshape(-1)

    def f():
        a, b = (base, y) if Wrt(wrt) is Wrt.FIRST else (x, base)
        return evaluate(metric, a, b)

    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        fd.reshape(-1)[i] = (hi - lo) / (2 * step)
    return fd


def fd_check(metric: MetricId, x, y, wrt: Wrt = Wrt.SECOND, step: float = 1e-4,
             rel_floor: float = 1e-6) -> GradientReport:
    """Compare the analytic gradient with central differences.

    The relative error only counts coordinates where |fd| > ``rel_floor``.
    """
    fd = fd_gradient(metric, x, y, wrt, step)
    an = grad_metric(metric, x, y, wrt)
    err = np.abs(an - fd)
    mask = np.abs(fd) > rel_floor
    rel = float(np.max(err[mask] / np.abs(fd[mask]))) if mask.any() else 0.0
    return GradientReport(an, fd, rel, float(err.max()))
