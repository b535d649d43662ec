import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lasi.imageio import ImageTensor
from lasi.neighborhood import build_offsets
from lasi.wls import (ChannelMode, EmbeddingMatrix, LasiConfig, NumericalError, accumulate_fast,
                      accumulate_naive, anticausal_decay_sum, batched_pinv, causal_decay_sum,
                      naive_decay_sum, predict, rank_one_transform, solve_embeddings)
from oracles import brute_accumulate, design_matrix_solve


def _weights(img, cfg):
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    return solve_embeddings(arr, cfg).weights.reshape(arr.shape[0], arr.shape[1], -1)


# -- rank-one transform ------------------------------------------------------


def test_rank_one_examples():
    a, b = rank_one_transform([1, 0, 0], 1.0)
    np.testing.assert_array_equal(a, np.diag([1, 0, 0]))
    np.testing.assert_array_equal(b, [1, 0, 0])
    a, b = rank_one_transform(np.zeros(3), 0.7)
    assert not a.any() and not b.any()
    a, b = rank_one_transform([1, 2], 3.0)
    np.testing.assert_array_equal(a, [[1, 2], [2, 4]])
    np.testing.assert_array_equal(b, [3, 6])


# -- accumulation --------------------------------------------------------------


def test_naive_matches_term_by_term_oracle(rng):
    plane = rng.random((4, 4))
    cfg = LasiConfig(n=2, omega=0.8)
    a_ref, b_ref = brute_accumulate(plane, build_offsets(2), 0.8)
    st_ = accumulate_naive(plane, cfg)
    np.testing.assert_allclose(st_.a_bar, a_ref, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(st_.b_bar, b_ref, rtol=1e-13, atol=1e-15)


def test_single_pixel_is_empty_sum():
    cfg = LasiConfig(n=3)
    for acc in (accumulate_naive, accumulate_fast):
        st_ = acc(np.array([[0.3]]), cfg)
        assert not st_.a_bar.any() and not st_.b_bar.any()


def test_two_pixel_row():
    plane = np.array([[0.2, 0.9]])
    cfg = LasiConfig(n=2, omega=0.5)
    a0, b0 = rank_one_transform([0.5, 0.5], 0.2)  # pixel 0 sees only padding
    for acc in (accumulate_naive, accumulate_fast):
        st_ = acc(plane, cfg)
        np.testing.assert_allclose(st_.a_bar[0, 1], 0.5 * a0, rtol=1e-15)
        np.testing.assert_allclose(st_.b_bar[0, 1], 0.5 * b0, rtol=1e-15)
        assert not st_.a_bar[0, 0].any()


@pytest.mark.parametrize("seed", range(5))
def test_fast_matches_naive(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 12, 2)
    cfg = LasiConfig(n=int(rng.integers(1, 9)), omega=float(rng.uniform(0.3, 1.0)))
    plane = rng.random((h, w))
    fast, slow = accumulate_fast(plane, cfg), accumulate_naive(plane, cfg)
    np.testing.assert_allclose(fast.a_bar, slow.a_bar, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(fast.b_bar, slow.b_bar, rtol=1e-12, atol=1e-14)


def test_accumulator_symmetric_psd(rng):
    st_ = accumulate_fast(rng.random((6, 7)), LasiConfig(n=6))
    assert np.max(np.abs(st_.a_bar - np.swapaxes(st_.a_bar, -1, -2))) <= 1e-9
    assert np.linalg.eigvalsh(st_.a_bar).min() >= -1e-9


def test_constant_plane_mass_grows_down_and_right():
    st_ = accumulate_naive(np.full((8, 8), 0.5), LasiConfig(n=4))
    a = st_.a_bar[..., 0, 0]
    assert np.all(np.diff(a, axis=0) > 0)
    # Rightward growth holds up to the center column; past it the rows above
    # lose more mass to the right border than the current row gains.
    assert np.all(np.diff(a[:, :5], axis=1) > 0)
    assert np.all(np.diff(a[1:, 5:], axis=1) < 0)
    np.testing.assert_allclose(accumulate_fast(np.full((8, 8), 0.5), LasiConfig(n=4)).a_bar,
                               st_.a_bar, rtol=1e-12)


def test_single_row_is_pure_horizontal_decay(rng):
    v = rng.random((1, 9))
    out = causal_decay_sum(v, 0.7)
    expect = [sum(0.7 ** (c - j) * v[0, j] for j in range(c)) for c in range(9)]
    np.testing.assert_allclose(out[0], expect, rtol=1e-13)


@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 1.0), st.integers(0, 2**32 - 1))
def test_decay_sums_are_adjoint(h, w, omega, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(h, w)), rng.normal(size=(h, w))
    lhs = np.sum(u * causal_decay_sum(v, omega))
    rhs = np.sum(anticausal_decay_sum(u, omega) * v)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(causal_decay_sum(v, omega), naive_decay_sum(v, omega),
                               rtol=1e-11, atol=1e-13)


# -- solve ---------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 4])
def test_design_matrix_oracle_4x4(n, rng):
    plane = rng.random((4, 4))
    cfg = LasiConfig(n=n, omega=0.8)
    np.testing.assert_allclose(_weights(plane, cfg), design_matrix_solve(plane, build_offsets(n), 0.8),
                               atol=1e-8)


@pytest.mark.parametrize("n", [1, 2, 4, 7, 12])
def test_constant_image_embeddings(n):
    cfg = LasiConfig(n=n)
    w = _weights(np.full((10, 10), 0.5), cfg)
    assert not w[0, 0].any()
    np.testing.assert_allclose(w.reshape(-1, n)[1:], 1.0 / n, atol=1e-9)
    pred = predict(np.full((10, 10), 0.5), cfg=cfg)
    assert pred.predicted[0, 0, 0] == 0.0
    assert pred.residual[0, 0, 0] == pytest.approx(0.25)
    assert pred.residual.reshape(-1)[1:].max() <= 1e-12


def test_pixel_zero_prediction(rng):
    img = rng.random((5, 5, 3))
    pred = predict(img, cfg=LasiConfig(n=4))
    np.testing.assert_array_equal(pred.predicted[0, 0], 0.0)
    np.testing.assert_allclose(pred.residual[0, 0], img[0, 0] ** 2)


def test_train_loss_matches_definition(rng):
    plane = rng.random((5, 6))
    cfg = LasiConfig(n=3, omega=0.7)
    pred = predict(plane[..., None], cfg=cfg)
    w = _weights(plane, cfg)
    from oracles import gather

    offs = build_offsets(3)
    for i in [1, 7, 18, 29]:
        ri, ci = divmod(i, 6)
        loss = 0.0
        for j in range(i):
            rj, cj = divmod(j, 6)
            wt = 0.7 ** (abs(ri - rj) + abs(ci - cj))
            loss += wt * (gather(plane, rj, cj, offs, 0.5) @ w[ri, ci] - plane[rj, cj]) ** 2
        assert pred.train_loss[ri, ci, 0] == pytest.approx(loss, rel=1e-8, abs=1e-12)


def test_causality(rng):
    img = rng.random((6, 7))
    cfg = LasiConfig(n=6)
    base = _weights(img, cfg).reshape(42, -1)
    for _ in range(5):
        j = int(rng.integers(0, 42))
        pert = img.copy()
        pert.flat[j] = rng.random()
        out = _weights(pert, cfg).reshape(42, -1)
        np.testing.assert_array_equal(out[: j + 1], base[: j + 1])


@pytest.mark.parametrize("seed", range(3))
def test_nested_models_train_loss(seed):
    img = np.random.default_rng(seed).random((7, 7))
    losses = [predict(img[..., None], cfg=LasiConfig(n=n)).train_loss for n in range(1, 9)]
    for small, big in zip(losses, losses[1:]):
        assert np.all(big <= small + 1e-12)


def test_minimum_norm_on_rank_deficient():
    # duplicate columns: the two copies must share weight equally (no null-space component)
    a = np.array([[[2.0, 2.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 1.0]]])
    p = batched_pinv(a, 1e-10)
    w = p[0] @ np.array([4.0, 4.0, 3.0])
    null = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    assert abs(w @ null) <= 1e-8
    np.testing.assert_allclose(a[0] @ w, [4, 4, 3], atol=1e-12)


def test_minimum_norm_in_images(rng):
    # early pixels see few data points, so their systems are rank deficient
    img = rng.random((4, 4))
    cfg = LasiConfig(n=8)
    w = _weights(img, cfg)
    st_ = accumulate_fast(img, cfg)
    for r, c in [(0, 1), (0, 2), (1, 0)]:
        evals, evecs = np.linalg.eigh(st_.a_bar[r, c])
        null = evecs[:, evals <= 1e-10 * evals.max()]
        assert null.shape[1] > 0
        assert np.linalg.norm(null.T @ w[r, c]) <= 1e-8


def test_determinism_and_thread_independence(rng):
    img = rng.random((24, 24, 3))
    cfg = LasiConfig(n=5)
    from lasi import wls

    wls._CACHE.clear()
    a = solve_embeddings(img, cfg, threads=1).to_bytes()
    wls._CACHE.clear()
    b = solve_embeddings(img, cfg, threads=4).to_bytes()
    assert a == b


def test_nonfinite_pinv_reports_index():
    a = np.stack([np.eye(2), np.array([[np.nan, 0], [0, 1.0]])])
    with pytest.raises(NumericalError) as exc:
        batched_pinv(a, 1e-10)
    assert exc.value.index == 1


def test_embedding_layout_and_bytes(rng):
    img = rng.random((3, 4, 3))
    cfg = LasiConfig(n=5)
    emb = solve_embeddings(img, cfg)
    assert emb.matrix.shape == (5, 36)
    per_plane = [solve_embeddings(img[:, :, c : c + 1], cfg).weights for c in range(3)]
    np.testing.assert_array_equal(emb.weights.reshape(12, 3, 5)[:, 1], per_plane[1])
    buf = emb.to_bytes()
    assert len(buf) == 16 + 8 * 5 * 36
    np.testing.assert_array_equal(EmbeddingMatrix.read_bytes(buf), emb.weights)


def test_joint_mode_equals_stacked_per_channel_data(rng):
    # one solve per site over N*C features; grayscale replicated into 3 channels
    gray = rng.random((5, 5, 1))
    rgb = np.repeat(gray, 3, axis=2)
    cfg = LasiConfig(n=3, channel_mode=ChannelMode.JOINT)
    emb = solve_embeddings(rgb, cfg)
    assert emb.weights.shape == (25, 9)
    # replicated channels make joint features redundant copies; min-norm splits weight evenly
    single = solve_embeddings(gray, LasiConfig(n=3)).weights
    np.testing.assert_allclose(emb.weights.reshape(25, 3, 3).sum(axis=2) / 3, single / 3, atol=1e-8)
    pred = predict(rgb, cfg=cfg)
    np.testing.assert_allclose(pred.predicted[..., 0], predict(gray, cfg=LasiConfig(n=3)).predicted[..., 0],
                               atol=1e-8)


def test_predict_with_explicit_embedding(rng):
    img = rng.random((4, 5, 1))
    cfg = LasiConfig(n=3)
    emb = solve_embeddings(img, cfg)
    a = predict(img, emb, cfg)
    b = predict(img, cfg=cfg)
    np.testing.assert_array_equal(a.predicted, b.predicted)
    zero = EmbeddingMatrix(np.zeros_like(emb.weights), 4, 5, 1, cfg.channel_mode)
    assert not predict(img, zero, cfg).predicted.any()
    assert predict(img, cfg=cfg).predicted.any()  # cache not mutated


def test_config_validation():
    for bad in [dict(n=0), dict(omega=0.0), dict(omega=1.5), dict(pinv_rcond=0.0), dict(pad=2.0)]:
        with pytest.raises(ValueError):
            LasiConfig(**bad)
    assert LasiConfig(channel_mode="joint").channel_mode is ChannelMode.JOINT
    assert LasiConfig() == LasiConfig(n=12, omega=0.8)


def test_accepts_image_tensor(rng):
    arr = rng.random((4, 4, 1))
    a = solve_embeddings(ImageTensor.from_array(arr), LasiConfig(n=2)).weights
    np.testing.assert_array_equal(a, solve_embeddings(arr, LasiConfig(n=2)).weights)
