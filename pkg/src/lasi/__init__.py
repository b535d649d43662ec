"""LASI: per-pixel weighted least squares embeddings as a perceptual image distance."""

from .imageio import ImageTensor, load_image, load_manifest, save_image
from .metrics import MetricId, evaluate, lasi_distance, mse, ms_ssim, psnr, ssim
from .wls import ChannelMode, EmbeddingMatrix, LasiConfig, predict, solve_embeddings

__all__ = [
    "ChannelMode",
    "EmbeddingMatrix",
    "ImageTensor",
    "LasiConfig",
    "MetricId",
    "evaluate",
    "lasi_distance",
    "load_image",
    "load_manifest",
    "ms_ssim",
    "mse",
    "predict",
    "psnr",
    "save_image",
    "solve_embeddings",
    "ssim",
]
