"""LASI distance and classical full-reference baselines behind one interface."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import structural as _ssim
from .imageio import as_array
from .wls import EmbeddingMatrix, LasiConfig, solve_embeddings

KINDS = ("lasi", "mse", "psnr", "ssim", "msssim")


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class MetricId:
    kind: str
    config: LasiConfig | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric {self.kind!r}; expected one of {KINDS}")
        if self.kind == "lasi":
            if self.config is None:
                object.__setattr__(self, "config", LasiConfig())
            elif not isinstance(self.config, LasiConfig):
                raise TypeError("LASI metric needs a LasiConfig")
        elif self.config is not None:
            raise ValueError(f"metric {self.kind!r} takes no config")

    @classmethod
    def lasi(cls, config: LasiConfig | None = None, **kwargs) -> "MetricId":
        return cls("lasi", config if config is not None else LasiConfig(**kwargs))

    @property
    def higher_is_similar(self) -> bool:
        """PSNR, SSIM and MS-SSIM grow as images get closer."""
        return self.kind in ("psnr", "ssim", "msssim")

    def __str__(self):
        if self.kind == "lasi":
            c = self.config
            return f"lasi(n={c.n}, omega={c.omega}, mode={c.channel_mode.value})"
        return self.kind


MSE = MetricId("mse")
PSNR = MetricId("psnr")
SSIM = MetricId("ssim")
MS_SSIM = MetricId("msssim")


def _pair(x, y):
    x, y = as_array(x), as_array(y)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def embedding_distance(ex: EmbeddingMatrix, ey: EmbeddingMatrix) -> float:
    if ex.weights.shape != ey.weights.shape:
        raise ShapeMismatchError("embedding shapes differ")
    return float(np.mean(np.linalg.norm(ex.weights - ey.weights, axis=1)))


def lasi_distance(x, y, cfg: LasiConfig = LasiConfig(), threads: int | None = None) -> float:
    """Mean over pixels of the L2 distance between the two images' embeddings."""
    x, y = _pair(x, y)
    return embedding_distance(solve_embeddings(x, cfg, threads), solve_embeddings(y, cfg, threads))


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x, y) -> float:
    """PSNR in dB for unit peak; ``inf`` for identical images."""
    m = mse(x, y)
    return math.inf if m == 0.0 else -10.0 * math.log10(m)


def ssim(x, y) -> float:
    x, y = _pair(x, y)
    return _ssim.ssim(x, y)


def ms_ssim(x, y) -> float:
    x, y = _pair(x, y)
    return _ssim.ms_ssim(x, y)


def evaluate(metric: MetricId, x, y, threads: int | None = None) -> float:
    """The metric's native value (a distance for LASI/MSE, a similarity otherwise)."""
    if metric.kind == "lasi":
        return lasi_distance(x, y, metric.config, threads)
    return {"mse": mse, "psnr": psnr, "ssim": ssim, "msssim": ms_ssim}[metric.kind](x, y)


def dissimilarity(metric: MetricId, x, y, threads: int | None = None) -> float:
    """Value oriented so that smaller means closer; used for rankings."""
    v = evaluate(metric, x, y, threads)
    return -v if metric.higher_is_similar else v
