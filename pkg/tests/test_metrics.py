import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lasi import data
from lasi.metrics import (MS_SSIM, MSE, PSNR, SSIM, MetricId, ShapeMismatchError, dissimilarity,
                          evaluate, lasi_distance, ms_ssim, mse, psnr, ssim)
from lasi.structural import gaussian_kernel, n_scales
from lasi.wls import LasiConfig, solve_embeddings

# Frozen from skimage.metrics.structural_similarity(gaussian_weights=True, sigma=1.5,
# use_sample_covariance=False, data_range=1.0) on the pairs built below.
SSIM_ORACLE_GRAY = 0.47196586828401843
SSIM_ORACLE_RGB = 0.37568612593359324


def _camera_pair():
    x = data.camera().array[16:48, 16:48]
    y = np.clip(x + np.random.default_rng(0).normal(0, 0.05, x.shape), 0, 1)
    return x, y


def _astronaut_pair():
    a = data.astronaut().array[:40, :40]
    b = np.clip(a * 0.7 + 0.1 + np.random.default_rng(1).normal(0, 0.03, a.shape), 0, 1)
    return a, b


CFG = LasiConfig(n=4)
ALL = [MetricId.lasi(CFG), MSE, PSNR, SSIM, MS_SSIM]


def test_ssim_matches_oracle():
    assert ssim(*_camera_pair()) == pytest.approx(SSIM_ORACLE_GRAY, abs=1e-12)
    assert ssim(*_astronaut_pair()) == pytest.approx(SSIM_ORACLE_RGB, abs=1e-12)


@pytest.mark.parametrize("img", [data.camera().array, data.astronaut().array[:24, :30]])
def test_identity_values(img):
    assert abs(ssim(img, img) - 1.0) <= 1e-12
    assert abs(ms_ssim(img, img) - 1.0) <= 1e-12
    assert mse(img, img) == 0.0
    assert psnr(img, img) == math.inf
    assert lasi_distance(img, img, CFG) == 0.0


def test_ssim_inverted_image():
    x = data.camera().array
    assert ssim(x, 1.0 - x) < 0.5


def test_mse_psnr_examples():
    black, white = np.zeros((4, 4, 1)), np.ones((4, 4, 1))
    assert mse(black, white) == 1.0
    assert psnr(black, white) == 0.0
    x = np.full((3, 3, 3), 0.4)
    assert mse(x, x + 0.1) == pytest.approx(0.01, abs=1e-15)
    assert psnr(x, x + 0.1) == pytest.approx(20.0)


@pytest.mark.parametrize("metric", ALL, ids=str)
def test_symmetry(metric, rng):
    base = data.camera().array[:24, :24]
    x = np.clip(base + rng.normal(0, 0.05, base.shape), 0, 1)
    y = np.clip(base + rng.normal(0, 0.05, base.shape), 0, 1)
    assert evaluate(metric, x, y) == evaluate(metric, y, x)


@pytest.mark.parametrize("metric", [MetricId.lasi(CFG), MSE], ids=str)
def test_non_negative(metric, rng):
    x, y = rng.random((12, 12, 1)), rng.random((12, 12, 1))
    assert evaluate(metric, x, y) >= 0


@pytest.mark.parametrize("seed", range(5))
def test_lasi_grows_with_noise(seed):
    x = data.camera().array
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=x.shape)
    d = [lasi_distance(x, np.clip(x + s * noise, 0, 1)) for s in (0.02, 0.05, 0.1)]
    assert d[0] < d[1] < d[2]


def test_lasi_is_mean_embedding_norm(rng):
    x, y = rng.random((5, 6, 3)), rng.random((5, 6, 3))
    ex, ey = solve_embeddings(x, CFG).matrix, solve_embeddings(y, CFG).matrix
    expect = sum(np.linalg.norm(ex[:, i] - ey[:, i]) for i in range(90)) / 90
    assert lasi_distance(x, y, CFG) == pytest.approx(expect, rel=1e-12)


def test_lasi_appended_rows_leave_earlier_pixels(rng):
    x, y = rng.random((6, 7, 1)), rng.random((6, 7, 1))
    extra = rng.random((3, 7, 1))
    ex = solve_embeddings(np.concatenate([x, extra]), CFG).weights[:42]
    ey = solve_embeddings(np.concatenate([y, extra]), CFG).weights[:42]
    np.testing.assert_array_equal(ex, solve_embeddings(x, CFG).weights)
    d_top = float(np.mean(np.linalg.norm(ex - ey, axis=1)))
    assert d_top == pytest.approx(lasi_distance(x, y, CFG), rel=1e-12)


def test_shape_mismatch():
    for metric in ALL:
        with pytest.raises(ShapeMismatchError):
            evaluate(metric, np.zeros((12, 12, 1)), np.zeros((12, 13, 1)))


def test_too_small_for_ssim():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20, 1)), np.zeros((10, 20, 1)))


def test_ms_ssim_scale_count():
    assert n_scales((176, 176)) == 5
    assert n_scales((64, 64)) == 3
    assert n_scales((11, 30)) == 1


def test_gaussian_kernel():
    k = gaussian_kernel()
    assert k.shape == (11,) and k.sum() == pytest.approx(1.0)
    assert np.argmax(k) == 5


@given(st.floats(0.001, 0.2), st.floats(0.25, 0.5))
def test_dissimilarity_orientation(small, large):
    # smaller dissimilarity means closer, whichever way the native value points
    x = np.full((12, 12, 1), 0.5)
    near, far = x + small, x - large
    for metric in [MSE, PSNR]:
        assert dissimilarity(metric, x, near) < dissimilarity(metric, x, far)


def test_metric_id():
    assert MetricId.lasi().config == LasiConfig()
    assert MetricId.lasi(n=3).config.n == 3
    assert str(MetricId.lasi(n=3)) == "lasi(n=3, omega=0.8, mode=per-channel)"
    with pytest.raises(ValueError):
        MetricId("lpips")
    with pytest.raises(ValueError):
        MetricId("mse", LasiConfig())
    assert not MSE.higher_is_similar and SSIM.higher_is_similar
