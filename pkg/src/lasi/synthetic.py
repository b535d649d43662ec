"""Synthetic 2-AFC and JND datasets built from the bundled images.

Alternatives are the reference plus Gaussian noise and a global luminance
offset. Simulated observers judge by noise amplitude alone: a uniform
brightness shift is far less visible than noise of equal energy, which is the
textbook case where MSE disagrees with perception. Preference fractions come
from a logistic psychometric function of the log noise ratio, sampled over a
finite panel of observers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import data
from .imageio import (ImageTensor, JndExample, ManifestKind, TwoAfcExample, load_manifest,
                      quantize, save_image, write_manifest)


def _reference_crops(rng: np.random.Generator, count: int, size: int) -> list[np.ndarray]:
    sources = [data.astronaut().array, data.camera().array]
    out = []
    for i in range(count):
        src = sources[i % len(sources)]
        r = rng.integers(0, src.shape[0] - size + 1)
        c = rng.integers(0, src.shape[1] - size + 1)
        crop = src[r : r + size, c : c + size]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
        out.append(np.ascontiguousarray(crop))
    return out


def distort(ref: np.ndarray, sigma: float, offset: float, rng: np.random.Generator) -> np.ndarray:
    return np.clip(ref + offset + rng.normal(0.0, sigma, ref.shape), 0.0, 1.0)


def preference(sigma0: float, sigma1: float, slope: float = 4.0) -> float:
    """Probability an observer picks alt1 (the one with noise ``sigma1``)."""
    return 1.0 / (1.0 + np.exp(-slope * np.log(sigma0 / sigma1)))


def _ext(arr):
    return "pgm" if arr.shape[2] == 1 else "ppm"


def _save(arr, path: Path) -> Path:
    save_image(quantize(ImageTensor.from_array(arr)), path)
    return path


def make_2afc_task(out_dir, n_examples: int = 50, seed: int = 0, size: int = 32,
                   sigma_range=(0.01, 0.08), max_offset: float = 0.1, observers: int = 5) -> Path:
    """Write images plus ``manifest.csv`` into ``out_dir`` and return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    refs = _reference_crops(rng, n_examples, size)
    lo, hi = np.log(sigma_range[0]), np.log(sigma_range[1])
    records = []
    for i, ref in enumerate(refs):
        s0, s1 = np.exp(rng.uniform(lo, hi, 2))
        o0, o1 = rng.uniform(-max_offset, max_offset, 2)
        ext = _ext(ref)
        files = (
            _save(ref, out / f"{i:04d}_ref.{ext}"),
            _save(distort(ref, s0, o0, rng), out / f"{i:04d}_alt0.{ext}"),
            _save(distort(ref, s1, o1, rng), out / f"{i:04d}_alt1.{ext}"),
        )
        p = rng.binomial(observers, preference(s0, s1)) / observers
        records.append(TwoAfcExample(*files, p=p))
    path = out / "manifest.csv"
    write_manifest(path, records, ManifestKind.TWO_AFC)
    return path


def make_jnd_task(out_dir, n_examples: int = 50, seed: int = 0, size: int = 32,
                  sigma_range=(0.002, 0.06), max_offset: float = 0.05, observers: int = 5,
                  threshold: float = 0.015) -> Path:
    """JND pairs (reference, distorted); "same" judgments fall off with noise amplitude."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    refs = _reference_crops(rng, n_examples, size)
    lo, hi = np.log(sigma_range[0]), np.log(sigma_range[1])
    records = []
    for i, ref in enumerate(refs):
        s = float(np.exp(rng.uniform(lo, hi)))
        o = rng.uniform(-max_offset, max_offset)
        ext = _ext(ref)
        a = _save(ref, out / f"{i:04d}_a.{ext}")
        b = _save(distort(ref, s, o, rng), out / f"{i:04d}_b.{ext}")
        p_same = 1.0 / (1.0 + np.exp(4.0 * np.log(s / threshold)))
        records.append(JndExample(a, b, p=rng.binomial(observers, p_same) / observers))
    path = out / "manifest.csv"
    write_manifest(path, records, ManifestKind.JND)
    return path


__all__ = ["make_2afc_task", "make_jnd_task", "distort", "preference", "load_manifest"]
