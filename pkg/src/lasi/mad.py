"""Maximum differentiation (MAD) competition between two metrics.

Images are parameterized as ``sigmoid(theta)`` so every iterate is a valid
image. Starting from a noisy copy of the reference, one branch pushes the
moving metric's dissimilarity up and the other pushes it down, each step
projected orthogonally to the fixed metric's gradient and then pulled back
onto the fixed metric's level set by Newton steps along that gradient.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .gradient import Wrt, grad_metric
from .imageio import ImageTensor, as_array, save_image
from .metrics import MetricId, evaluate

EPS = 1.0 / 255.0


class Direction(Enum):
    MAX = "max"
    MIN = "min"


class DegenerateGradientError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MadConfig:
    fixed_metric: MetricId
    moving_metric: MetricId
    steps: int = 50
    step_size: float = 1e-2
    noise_sigma: float = 0.3
    correction_tol: float = 1e-3
    seed: int = 0
    max_corrections: int = 10
    max_halvings: int = 8

    def __post_init__(self):
        if self.fixed_metric == self.moving_metric:
            raise ValueError("fixed and moving metrics must differ")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not (self.step_size > 0 and self.noise_sigma >= 0 and self.correction_tol > 0):
            raise ValueError("step_size and correction_tol must be positive, noise_sigma >= 0")


def sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t)))


def logit(x):
    x = np.asarray(x, dtype=np.float64)
    return np.log(x) - np.log1p(-x)


def corrupt_params(r, sigma: float, seed: int) -> np.ndarray:
    """Noisy parameters ``logit(clip(r)) + N(0, sigma^2)``."""
    arr = np.clip(as_array(r), EPS, 1.0 - EPS)
    noise = np.random.default_rng(seed).normal(0.0, sigma, arr.shape) if sigma > 0 else 0.0
    return logit(arr) + noise


def corrupt_reference(r, sigma: float, seed: int) -> ImageTensor:
    return ImageTensor.from_array(sigmoid(corrupt_params(r, sigma, seed)))


def _param_grad(metric: MetricId, r, theta) -> np.ndarray:
    x = sigmoid(theta)
    return grad_metric(metric, r, x, Wrt.SECOND) * x * (1.0 - x)


def _dissim_sign(metric: MetricId) -> float:
    return -1.0 if metric.higher_is_similar else 1.0


def project_out(g: np.ndarray, f: np.ndarray) -> np.ndarray:
    ff = float(np.vdot(f, f))
    if ff < 1e-20:
        raise DegenerateGradientError("fixed-metric gradient vanished; level set undefined")
    return g - (float(np.vdot(g, f)) / ff) * f


def correct(r, theta: np.ndarray, metric: MetricId, target: float, tol: float,
            max_iter: int = 10) -> tuple[np.ndarray, float]:
    """Newton iterations along the metric's gradient back to ``metric == target``."""
    d = evaluate(metric, r, sigmoid(theta))
    for _ in range(max_iter):
        if abs(d - target) <= tol * abs(target):
            break
        f = _param_grad(metric, r, theta)
        ff = float(np.vdot(f, f))
        if ff < 1e-20:
            raise DegenerateGradientError("fixed-metric gradient vanished during correction")
        theta = theta - ((d - target) / ff) * f
        d = evaluate(metric, r, sigmoid(theta))
    return theta, d


def mad_step(r, theta, cfg: MadConfig, direction: Direction, d_target: float | None = None) -> np.ndarray:
    """One projected step followed by level-set correction.

    The projected direction is rescaled to unit RMS per parameter, so
    ``step_size`` is the RMS change of the logits before correction. If the
    correction does not reach the level set, the step is halved and retried.
    ``d_target`` defaults to the fixed metric's value at ``theta``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    direction = Direction(direction)
    if d_target is None:
        d_target = evaluate(cfg.fixed_metric, r, sigmoid(theta))
    g = _param_grad(cfg.moving_metric, r, theta)
    f = _param_grad(cfg.fixed_metric, r, theta)
    g_perp = project_out(g, f)
    norm = float(np.linalg.norm(g_perp))
    if norm <= 1e-10 * float(np.linalg.norm(g)):
        # moving gradient parallel to the fixed one: nothing to gain on the level set
        step = np.zeros_like(theta)
    else:
        sign = _dissim_sign(cfg.moving_metric) * (1.0 if direction is Direction.MAX else -1.0)
        step = sign * cfg.step_size * math.sqrt(g_perp.size) * g_perp / norm
    tol = cfg.correction_tol * abs(d_target)
    for _ in range(cfg.max_halvings + 1):
        cand, d = correct(r, theta + step, cfg.fixed_metric, d_target, cfg.correction_tol,
                          cfg.max_corrections)
        if abs(d - d_target) <= tol:
            return cand
        step = 0.5 * step
    warnings.warn(f"level-set correction stopped at relative error {abs(d - d_target) / abs(d_target):.2e}")
    return cand


@dataclass
class MadTrajectory:
    reference: ImageTensor
    corrupted: ImageTensor
    d_target: float
    x_max: list = field(default_factory=list)
    x_min: list = field(default_factory=list)
    fixed_max: list = field(default_factory=list)
    moving_max: list = field(default_factory=list)
    fixed_min: list = field(default_factory=list)
    moving_min: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.x_max) - 1

    def max_drift(self) -> float:
        """Largest relative deviation of the fixed metric from its starting value."""
        vals = np.array(self.fixed_max + self.fixed_min)
        return float(np.max(np.abs(vals - self.d_target)) / abs(self.d_target))

    def write(self, out_dir) -> None:
        """Dump the corrupted reference, numbered iterates and per-branch CSVs.

        A zero-step trajectory writes only the corrupted reference.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ext = "pgm" if self.reference.channels == 1 else "ppm"
        save_image(self.corrupted, out / f"corrupted.{ext}")
        if self.steps == 0:
            return
        for k in range(1, self.steps + 1):
            save_image(self.x_max[k], out / f"max_{k:03d}.{ext}")
            save_image(self.x_min[k], out / f"min_{k:03d}.{ext}")
        for name, fixed, moving in (("max", self.fixed_max, self.moving_max),
                                    ("min", self.fixed_min, self.moving_min)):
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "d_fixed", "d_moving"])
                for k, (a, b) in enumerate(zip(fixed, moving)):
                    w.writerow([k, repr(a), repr(b)])


def run_mad(r, cfg: MadConfig) -> MadTrajectory:
    ref = r if isinstance(r, ImageTensor) else ImageTensor.from_array(r)
    theta0 = corrupt_params(ref, cfg.noise_sigma, cfg.seed)
    r_tilde = ImageTensor.from_array(sigmoid(theta0))
    ra = ref.array
    d_target = evaluate(cfg.fixed_metric, ra, r_tilde.array)
    d_move0 = evaluate(cfg.moving_metric, ra, r_tilde.array)
    traj = MadTrajectory(ref, r_tilde, d_target, [r_tilde], [r_tilde],
                         [d_target], [d_move0], [d_target], [d_move0])
    for direction, xs, fixed, moving in ((Direction.MAX, traj.x_max, traj.fixed_max, traj.moving_max),
                                         (Direction.MIN, traj.x_min, traj.fixed_min, traj.moving_min)):
        theta = theta0.copy()
        for _ in range(cfg.steps):
            theta = mad_step(ra, theta, cfg, direction, d_target)
            img = ImageTensor.from_array(sigmoid(theta))
            xs.append(img)
            fixed.append(evaluate(cfg.fixed_metric, ra, img.array))
            moving.append(evaluate(cfg.moving_metric, ra, img.array))
    return traj
