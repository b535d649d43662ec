"""Per-pixel weighted least squares embeddings.

For every pixel i the embedding w_i minimizes

    sum_{j < i} omega**l_ij * (n_j . w - x_j)**2

where n_j is pixel j's causal neighborhood and l_ij the Manhattan distance
between the two sites. The solve goes through the normal equations
``Abar_i w = bbar_i`` with ``Abar_i = sum_j omega**l_ij n_j n_j^T`` and a
pseudo-inverse, so rank-deficient systems get the minimum-norm minimizer.

Forming the normal equations squares the condition number, and early pixels
with few data points are often nearly singular. The sums are therefore
accumulated in double-double precision, and the float64 pseudo-inverse
solution is polished by a few steps of iterative refinement whose residual
``bbar - Abar w`` is evaluated in that same precision.

Two channel modes are supported. ``PER_CHANNEL`` treats each channel plane as
an independent grayscale problem. ``JOINT`` builds one problem per spatial
site whose features are the same spatial offsets taken from all channels
(dimension N*C, offset-major, channel-fastest) and whose data points are the
C channel values of every earlier site, all sharing that site's features.
"""

from __future__ import annotations

import hashlib
import os
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import dd
from .imageio import ImageTensor, as_array
from .neighborhood import build_offsets, neighborhood_features


class ChannelMode(Enum):
    PER_CHANNEL = "per-channel"
    JOINT = "joint"


class NumericalError(ArithmeticError):
    """A solve failed to converge or produced non-finite values."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


DUMP_VERSION = 1
REFINE_STEPS = 3


@dataclass(frozen=True)
class LasiConfig:
    n: int = 12
    omega: float = 0.8
    channel_mode: ChannelMode = ChannelMode.PER_CHANNEL
    pinv_rcond: float = 1e-10
    pad: float = 0.5

    def __post_init__(self):
        if isinstance(self.channel_mode, str):
            object.__setattr__(self, "channel_mode", ChannelMode(self.channel_mode))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not (0.0 < self.omega <= 1.0):
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if not self.pinv_rcond > 0.0:
            raise ValueError(f"pinv_rcond must be positive, got {self.pinv_rcond}")
        if not (0.0 <= self.pad <= 1.0):
            raise ValueError(f"pad must lie in [0, 1], got {self.pad}")

    @property
    def offsets(self):
        return build_offsets(self.n)


@dataclass(frozen=True)
class AccumulatorState:
    """Weighted causal sums for one plane; arrays are indexed by (row, col)."""

    a_bar: np.ndarray  # (H, W, D, D)
    b_bar: np.ndarray  # (H, W, D)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-pixel embeddings, one row per pixel in raster order.

    ``weights`` has shape (k, D); ``matrix`` is the D x k column-stacked view.
    In per-channel mode k = H*W*C, in joint mode k = H*W.
    """

    weights: np.ndarray
    height: int
    width: int
    channels: int
    mode: ChannelMode

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def columns(self) -> int:
        return self.weights.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.weights.T

    def to_bytes(self) -> bytes:
        """``LASI`` magic, u32 D, u32 k, u32 format version, then k*D little-endian float64.

        Columns are written one after another (column-major in the D x k view).
        """
        head = b"LASI" + np.array([self.dim, self.columns, DUMP_VERSION], dtype="<u4").tobytes()
        return head + np.ascontiguousarray(self.weights, dtype="<f8").tobytes()

    @staticmethod
    def read_bytes(buf: bytes) -> np.ndarray:
        """Inverse of :meth:`to_bytes`; returns the (k, D) weights."""
        if buf[:4] != b"LASI":
            raise ValueError("not a LASI embedding dump")
        dim, cols, version = (int(v) for v in np.frombuffer(buf[4:16], dtype="<u4"))
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported embedding dump version {version}")
        body = np.frombuffer(buf[16:], dtype="<f8")
        if body.size != dim * cols:
            raise ValueError(f"expected {dim}*{cols} values, found {body.size}")
        return body.reshape(cols, dim)


# -- step 1: rank-one transform ---------------------------------------------


def rank_one_transform(neigh, value: float) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(neigh, dtype=np.float64)
    return np.outer(n, n), value * n


# -- step 2: weigh and sum ---------------------------------------------------


def causal_decay_sum(values: np.ndarray, omega: float) -> np.ndarray:
    """out[r, c] = sum over earlier sites (r', c') of omega**(|r-r'|+|c-c'|) * values[r', c'].

    ``values`` has shape (H, W, ...). Uses omega**(|dr|+|dc|) = omega**|dr| * omega**|dc|:
    a left prefix L and right suffix R per row give the full-row smoothing
    L + V + R, which a vertical recurrence pushes downward.
    """
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape[:2]
    left = np.zeros_like(v)
    right = np.zeros_like(v)
    for c in range(w - 1):
        left[:, c + 1] = omega * (left[:, c] + v[:, c])
    for c in range(w - 1, 0, -1):
        right[:, c - 1] = omega * (right[:, c] + v[:, c])
    row_smooth = left + v + right
    out = left  # reuse: out[r] = up[r] + left[r]
    up = np.zeros_like(v[0])
    for r in range(h):
        out[r] += up
        up = omega * (up + row_smooth[r])
    return out


def anticausal_decay_sum(values: np.ndarray, omega: float) -> np.ndarray:
    """Adjoint of :func:`causal_decay_sum`: sums over later sites instead."""
    return causal_decay_sum(values[::-1, ::-1], omega)[::-1, ::-1]


def naive_decay_sum(values: np.ndarray, omega: float) -> np.ndarray:
    """Direct O(k^2) evaluation of the same sum. Reference only."""
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape[:2]
    flat = v.reshape(h * w, *v.shape[2:])
    rows, cols = np.divmod(np.arange(h * w), w)
    out = np.zeros_like(flat)
    for i in range(1, h * w):
        dist = np.abs(rows[:i] - rows[i]) + np.abs(cols[:i] - cols[i])
        out[i] = np.tensordot(omega ** dist.astype(np.float64), flat[:i], axes=1)
    return out.reshape(v.shape)


def _plane_terms(plane, cfg: LasiConfig):
    feats = neighborhood_features(plane, cfg.offsets, cfg.pad)
    a = feats[..., :, None] * feats[..., None, :]
    b = plane[..., None] * feats
    return a, b


def accumulate_naive(plane, cfg: LasiConfig) -> AccumulatorState:
    plane = np.asarray(plane, dtype=np.float64)
    a, b = _plane_terms(plane, cfg)
    return AccumulatorState(naive_decay_sum(a, cfg.omega), naive_decay_sum(b, cfg.omega))


def _accumulate_dd(feats, target, mult: int, omega: float):
    """Double-double Abar and bbar for features (H, W, D) and targets (H, W)."""
    a = dd.two_prod(feats[..., :, None], feats[..., None, :])
    if mult != 1:
        a = dd.mul(a, float(mult))
    b = dd.two_prod(target[..., None], feats)
    return dd.causal_decay_sum(a, omega), dd.causal_decay_sum(b, omega)


def accumulate_fast(plane, cfg: LasiConfig) -> AccumulatorState:
    """Separable accumulation, rounded to float64 from double-double sums."""
    plane = np.asarray(plane, dtype=np.float64)
    a, b = _accumulate_dd(neighborhood_features(plane, cfg.offsets, cfg.pad), plane, 1, cfg.omega)
    return AccumulatorState(a[0], b[0])


# -- step 3: solve -----------------------------------------------------------


def _pinv_chunk(a: np.ndarray, rcond: float):
    """Pseudo-inverses plus the dropped right singular vectors (zero columns where kept)."""
    u, s, vt = np.linalg.svd(a)
    keep = s > rcond * s[..., :1]
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = np.einsum("...ji,...j,...kj->...ik", vt, inv, u)
    null = np.swapaxes(vt, -1, -2) * ~keep[..., None, :]
    return pinv, null


def _pinv_locate_failure(a: np.ndarray, rcond: float, start: int):
    for i in range(a.shape[0]):
        try:
            _pinv_chunk(a[i : i + 1], rcond)
        except np.linalg.LinAlgError:
            raise NumericalError(f"SVD did not converge at pixel {start + i}", start + i) from None
    raise NumericalError("SVD did not converge", None)


def _pinv_with_null(a: np.ndarray, rcond: float, threads: int | None = None):
    m = a.shape[0]
    threads = threads or os.cpu_count() or 1
    n_chunks = max(1, min(threads, m // 256))
    bounds = np.linspace(0, m, n_chunks + 1).astype(int)

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        try:
            return _pinv_chunk(a[lo:hi], rcond)
        except np.linalg.LinAlgError:
            _pinv_locate_failure(a[lo:hi], rcond, lo)

    if m == 0:
        return np.zeros_like(a), np.zeros_like(a)
    if n_chunks == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(n_chunks) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    out = np.concatenate([p[0] for p in parts], axis=0)
    null = np.concatenate([p[1] for p in parts], axis=0)
    bad = ~np.all(np.isfinite(out.reshape(m, -1)), axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"non-finite pseudo-inverse at pixel {idx}", idx)
    return out, null


def batched_pinv(a: np.ndarray, rcond: float, threads: int | None = None) -> np.ndarray:
    """Pseudo-inverse of each matrix in an (M, D, D) stack.

    Singular values at or below ``rcond * sigma_max`` are dropped. Work is
    split into contiguous chunks that may run on a thread pool; each matrix
    is handled independently, so the result does not depend on ``threads``.
    """
    return _pinv_with_null(a, rcond, threads)[0]


def _refine(a_dd, b_dd, pinv, null, w, steps: int) -> np.ndarray:
    """Mixed-precision polish of ``w = pinv @ b`` toward the exact minimum-norm solution.

    The float64 SVD of a nearly singular Abar resolves small singular
    directions only to eps * cond. Residuals taken in double-double fix the
    fit; the dropped directions are likewise pulled onto the exact null
    space of the double-double matrix and then projected out of ``w``.
    """
    mv = lambda m, v: np.einsum("...ij,...j->...i", m, v)  # noqa: E731
    for _ in range(steps):
        r = dd.add(b_dd, dd.mul(dd.matvec(a_dd, w), -1.0))
        w = w + mv(pinv, r[0] + r[1])
    deficient = np.flatnonzero(np.any(null != 0.0, axis=(-2, -1)))
    if deficient.size == 0:
        return w
    a_sub = (a_dd[0][deficient], a_dd[1][deficient])
    p_sub, z = pinv[deficient], null[deficient]
    d = z.shape[-1]
    for _ in range(2):
        az = np.stack([sum(dd.matvec(a_sub, z[..., j])) for j in range(d)], axis=-1)
        z = z - np.einsum("...ij,...jk->...ik", p_sub, az)
    gram_pinv = np.linalg.pinv(np.einsum("...ji,...jk->...ik", z, z), rcond=1e-6, hermitian=True)
    ws = w[deficient]
    coef = mv(gram_pinv, np.einsum("...ji,...j->...i", z, ws))
    w = w.copy()
    w[deficient] = ws - mv(z, coef)
    return w


@dataclass
class Problem:
    """One independent WLS problem: a channel plane, or the joint stack.

    Site j contributes ``mult * n_j n_j^T`` to A and ``target_j * n_j`` to b,
    where ``target_j`` is the sum of the channel values it predicts.
    """

    feats: np.ndarray  # (H, W, D)
    target: np.ndarray  # (H, W)
    values: np.ndarray  # (H, W, mult), the predicted channel values
    mult: int
    a_bar: np.ndarray | None = None
    b_bar: np.ndarray | None = None
    pinv: np.ndarray | None = None
    w: np.ndarray | None = None


def build_problems(arr: np.ndarray, cfg: LasiConfig) -> list[Problem]:
    offsets = cfg.offsets
    h, w, ch = arr.shape
    if cfg.channel_mode is ChannelMode.PER_CHANNEL:
        out = []
        for c in range(ch):
            plane = arr[:, :, c]
            out.append(Problem(neighborhood_features(plane, offsets, cfg.pad), plane, arr[:, :, c : c + 1], 1))
        return out
    feats = np.stack(
        [neighborhood_features(arr[:, :, c], offsets, cfg.pad) for c in range(ch)], axis=-1
    ).reshape(h, w, len(offsets) * ch)
    return [Problem(feats, arr.sum(axis=2), arr, ch)]


def solve_problem(prob: Problem, cfg: LasiConfig, threads: int | None = None) -> Problem:
    h, w, d = prob.feats.shape
    a, b = _accumulate_dd(prob.feats, prob.target, prob.mult, cfg.omega)
    prob.a_bar, prob.b_bar = a[0], b[0]
    pinv, null = _pinv_with_null(prob.a_bar.reshape(h * w, d, d), cfg.pinv_rcond, threads)
    flat_dd = lambda x: tuple(v.reshape(h * w, *v.shape[2:]) for v in x)  # noqa: E731
    wv = np.einsum("...ij,...j->...i", pinv, prob.b_bar.reshape(h * w, d))
    wv = _refine(flat_dd(a), flat_dd(b), pinv, null, wv, REFINE_STEPS)
    prob.pinv = pinv.reshape(h, w, d, d)
    prob.w = wv.reshape(h, w, d)
    return prob


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 8
_CACHE_LOCK = threading.Lock()


def solve_all(img, cfg: LasiConfig, threads: int | None = None) -> list[Problem]:
    """Solve every problem of an image. Results are cached by content; treat them as read-only."""
    arr = np.ascontiguousarray(as_array(img), dtype=np.float64)
    key = (hashlib.blake2b(arr.tobytes(), digest_size=16).digest(), arr.shape, cfg)
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    problems = [solve_problem(p, cfg, threads) for p in build_problems(arr, cfg)]
    with _CACHE_LOCK:
        _CACHE[key] = problems
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return problems


def _assemble(problems: list[Problem], shape, cfg: LasiConfig) -> EmbeddingMatrix:
    h, w, ch = shape
    if cfg.channel_mode is ChannelMode.PER_CHANNEL:
        stacked = np.stack([p.w for p in problems], axis=2)  # (H, W, C, D)
        weights = stacked.reshape(h * w * ch, -1)
    else:
        weights = problems[0].w.reshape(h * w, -1)
    return EmbeddingMatrix(weights, h, w, ch, cfg.channel_mode)


def solve_embeddings(img, cfg: LasiConfig = LasiConfig(), threads: int | None = None) -> EmbeddingMatrix:
    arr = as_array(img)
    return _assemble(solve_all(arr, cfg, threads), arr.shape, cfg)


# -- predictions -------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    predicted: np.ndarray  # (H, W, C)
    residual: np.ndarray  # (H, W, C), squared prediction error
    train_loss: np.ndarray  # (H, W, C) per-channel, (H, W) joint

    @property
    def mse(self) -> float:
        return float(np.mean(self.residual))


def predict(img, emb: EmbeddingMatrix | None = None, cfg: LasiConfig = LasiConfig(),
            threads: int | None = None) -> Prediction:
    """Predict each pixel from its own neighborhood using its embedding.

    Also returns the squared residuals and the attained WLS objective per
    pixel. If ``emb`` is given it must come from ``img`` under ``cfg``.
    """
    arr = as_array(img)
    h, w, ch = arr.shape
    problems = solve_all(arr, cfg, threads)
    if emb is not None:
        if emb.weights.shape != _assemble(problems, arr.shape, cfg).weights.shape:
            raise ValueError("embedding does not match image/config")
        problems = _with_weights(problems, emb, arr.shape, cfg)
    losses = []
    if cfg.channel_mode is ChannelMode.PER_CHANNEL:
        pred = np.stack([np.einsum("...i,...i->...", p.feats, p.w) for p in problems], axis=2)
    else:
        p = problems[0]
        pred = np.repeat(np.einsum("...i,...i->...", p.feats, p.w)[..., None], ch, axis=2)
    for p in problems:
        losses.append(train_loss(p.feats, p.values, p.w, cfg.omega))
    loss = np.stack(losses, axis=2) if cfg.channel_mode is ChannelMode.PER_CHANNEL else losses[0]
    return Prediction(pred, (arr - pred) ** 2, loss)


def train_loss(feats: np.ndarray, values: np.ndarray, w: np.ndarray, omega: float,
               block: int = 256) -> np.ndarray:
    """Attained WLS objective at every pixel, summed term by term.

    The closed form w'Aw - 2w'b + c cancels catastrophically when A is
    ill-conditioned and |w| is large, so the residuals are formed explicitly,
    a block of pixels at a time. Cost O(k^2 D).
    """
    h, wd, d = feats.shape
    k = h * wd
    f = feats.reshape(k, d)
    x = values.reshape(k, -1)
    wt = w.reshape(k, d)
    rows, cols = np.divmod(np.arange(k), wd)
    out = np.zeros(k)
    for lo in range(0, k, block):
        hi = min(lo + block, k)
        pred = f[:hi] @ wt[lo:hi].T  # (j, i)
        err = ((pred[:, :, None] - x[:hi, None, :]) ** 2).sum(axis=2)
        dist = np.abs(rows[:hi, None] - rows[None, lo:hi]) + np.abs(cols[:hi, None] - cols[None, lo:hi])
        weight = np.where(np.arange(hi)[:, None] < np.arange(lo, hi)[None, :], omega ** dist, 0.0)
        out[lo:hi] = np.einsum("ji,ji->i", weight, err)
    return out.reshape(h, wd)


def _with_weights(problems, emb: EmbeddingMatrix, shape, cfg):
    h, w, ch = shape
    if cfg.channel_mode is ChannelMode.PER_CHANNEL:
        stacked = emb.weights.reshape(h, w, ch, -1)
        return [replace(p, w=stacked[:, :, c]) for c, p in enumerate(problems)]
    return [replace(problems[0], w=emb.weights.reshape(h, w, -1))]


def to_image(arr) -> ImageTensor:
    """Clip to [0, 1] and wrap; predictions can overshoot the valid range."""
    return ImageTensor.from_array(np.clip(arr, 0.0, 1.0))
