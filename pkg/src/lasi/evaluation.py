"""2-AFC and JND scoring, reference bounds, and the neighborhood-size sweep."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .imageio import DatasetManifest, ManifestKind, load_image
from .metrics import MetricId, dissimilarity
from .neighborhood import build_offsets, reach
from .wls import LasiConfig, predict


class DegenerateDatasetError(ValueError):
    pass


def _map(fn, items, threads):
    if threads == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


# -- 2-AFC -------------------------------------------------------------------


@dataclass(frozen=True)
class TwoAfcResult:
    score: float
    majority_bound: float
    human_level: float
    per_example: list  # (a, credit) pairs
    d0: np.ndarray
    d1: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "d0", "d1", "a", "credit"])
            for i, ((a, credit), d0, d1) in enumerate(zip(self.per_example, self.d0, self.d1)):
                w.writerow([i, repr(float(d0)), repr(float(d1)), a, repr(credit)])


def decision(d0: float, d1: float) -> float:
    """1 if alt1 is closer, 0 if alt0 is closer, 0.5 on a tie."""
    if d1 < d0:
        return 1
    if d1 > d0:
        return 0
    return 0.5


def score_2afc_distances(d0, d1, p) -> TwoAfcResult:
    """Score precomputed distances ``d(alt0, ref)``, ``d(alt1, ref)`` against human fractions ``p``."""
    d0, d1, p = (np.asarray(v, dtype=np.float64) for v in (d0, d1, p))
    if p.size == 0:
        raise DegenerateDatasetError("cannot score an empty 2-AFC manifest")
    per = []
    for a0, a1, pi in zip(d0, d1, p):
        a = decision(a0, a1)
        credit = 0.5 if a == 0.5 else (pi if a == 1 else 1.0 - pi)
        per.append((a, float(credit)))
    n = len(per)
    return TwoAfcResult(
        score=math.fsum(c for _, c in per) / n,
        majority_bound=math.fsum(max(pi, 1 - pi) for pi in p) / n,
        human_level=math.fsum(pi * pi + (1 - pi) ** 2 for pi in p) / n,
        per_example=per,
        d0=d0,
        d1=d1,
    )


def afc_distances(manifest: DatasetManifest, metric: MetricId, threads: int | None = None):
    if manifest.kind is not ManifestKind.TWO_AFC:
        raise ValueError("expected a 2-AFC manifest")

    def one(rec):
        ref, x0, x1 = (load_image(f).array for f in (rec.reference, rec.alt0, rec.alt1))
        return dissimilarity(metric, x0, ref), dissimilarity(metric, x1, ref)

    pairs = _map(one, list(manifest.records), threads)
    d = np.array(pairs, dtype=np.float64).reshape(-1, 2)
    return d[:, 0], d[:, 1]


def score_2afc(manifest: DatasetManifest, metric: MetricId, threads: int | None = None) -> TwoAfcResult:
    if len(manifest) == 0:
        raise DegenerateDatasetError("cannot score an empty 2-AFC manifest")
    d0, d1 = afc_distances(manifest, metric, threads)
    return score_2afc_distances(d0, d1, [r.p for r in manifest.records])


# -- JND ---------------------------------------------------------------------


@dataclass(frozen=True)
class JndResult:
    map_score: float
    pr_curve: list  # (recall, precision) per rank
    distances: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "recall", "precision"])
            for t, (rec, prec) in enumerate(self.pr_curve, start=1):
                w.writerow([t, repr(rec), repr(prec)])


def jnd_map_distances(dist, p) -> JndResult:
    """Average precision of ranking pairs by ascending distance, with soft labels ``p``.

    The t-th ranked prefix has precision sum(p)/t and recall sum(p)/sum(all p);
    the area is accumulated as a step function over recall. Ties keep input order.
    """
    dist = np.asarray(dist, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    total = p.sum()
    if p.size == 0 or total <= 0.0:
        raise DegenerateDatasetError("JND labels sum to zero; recall is undefined")
    order = np.argsort(dist, kind="stable")
    tp = np.cumsum(p[order])
    ranks = np.arange(1, p.size + 1)
    precision = tp / ranks
    recall = tp / total
    gains = np.diff(np.concatenate(([0.0], recall)))
    score = float(np.sum(gains * precision))
    return JndResult(score, list(zip(recall.tolist(), precision.tolist())), dist)


def score_jnd(manifest: DatasetManifest, metric: MetricId, threads: int | None = None) -> JndResult:
    if manifest.kind is not ManifestKind.JND:
        raise ValueError("expected a JND manifest")

    def one(rec):
        return dissimilarity(metric, load_image(rec.img_a).array, load_image(rec.img_b).array)

    dist = _map(one, list(manifest.records), threads)
    return jnd_map_distances(dist, [r.p for r in manifest.records])


# -- neighborhood-size sweep -------------------------------------------------


def prediction_margin(n_values) -> int:
    """Border width outside which every neighborhood in the sweep is fully in bounds."""
    return reach(build_offsets(max(n_values)))


def masked_mean(z: np.ndarray, margin: int) -> float:
    """Mean over rows >= margin and margin <= col < W - margin."""
    if margin == 0:
        return float(np.mean(z))
    inner = z[margin:, margin:-margin]
    if inner.size == 0:
        raise ValueError(f"image too small for a {margin}-pixel evaluation margin")
    return float(np.mean(inner))


@dataclass(frozen=True)
class SweepRow:
    n: int
    prediction_mse: float
    afc_score: float
    prediction_mse_full: float
    train_loss: float | None = None


def sweep_n(manifest: DatasetManifest, n_values, template: LasiConfig = LasiConfig(),
            threads: int | None = None, include_train_loss: bool = False) -> list[SweepRow]:
    """Prediction error of the references and 2-AFC score as the neighborhood grows.

    ``prediction_mse`` averages squared residuals over pixels whose largest
    neighborhood in the sweep lies inside the image; the full-image mean is
    reported alongside as ``prediction_mse_full``.
    """
    n_values = list(n_values)
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be strictly ascending")
    margin = prediction_margin(n_values)
    refs = [load_image(r.reference).array for r in manifest.records]
    rows = []
    for n in n_values:
        cfg = replace(template, n=n)
        preds = _map(lambda a: predict(a, cfg=cfg), refs, threads)
        inner = math.fsum(masked_mean(p.residual, margin) for p in preds) / len(preds)
        full = math.fsum(p.mse for p in preds) / len(preds)
        loss = None
        if include_train_loss:
            loss = math.fsum(float(np.mean(p.train_loss)) for p in preds) / len(preds)
        score = score_2afc(manifest, MetricId.lasi(cfg), threads).score
        rows.append(SweepRow(n, inner, score, full, loss))
    return rows


def write_sweep_csv(rows: list[SweepRow], dest) -> None:
    """Write the sweep table to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_sweep(rows, dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write_sweep(rows, fh)


def _write_sweep(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    header = ["n", "prediction_mse", "afc_score", "prediction_mse_full"]
    with_loss = any(r.train_loss is not None for r in rows)
    if with_loss:
        header.append("train_loss")
    w.writerow(header)
    for r in rows:
        line = [r.n, repr(r.prediction_mse), repr(r.afc_score), repr(r.prediction_mse_full)]
        if with_loss:
            line.append(repr(r.train_loss))
        w.writerow(line)


def spearman(a, b) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    from scipy.stats import spearmanr

    return float(spearmanr(a, b).statistic)
