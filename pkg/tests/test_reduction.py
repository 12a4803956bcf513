import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acoustic_eeg.errors import DimMismatch, RankDeficient
from acoustic_eeg.reduction import (
    FEATURE_SETS, center_kernel, explained_variance, fitted_scores, kpca_fit, kpca_transform,
    rbf_kernel,
)
from oracles import jacobi_eigh


def _align_signs(a, b):
    """Flip columns of ``a`` to best match ``b``."""
    signs = np.sign(np.sum(a * b, axis=0))
    signs[signs == 0] = 1
    return a * signs


def test_linear_kpca_equals_pca(rng):
    x = rng.normal(size=(200, 5)) * [3.0, 2.0, 1.5, 1.0, 0.5]
    xc = x - x.mean(axis=0)
    model = kpca_fit(xc, 5, kernel="linear")
    _, vecs = jacobi_eigh(xc.T @ xc / len(xc))
    pca_scores = xc @ vecs
    ours = kpca_transform(model, xc)
    np.testing.assert_allclose(_align_signs(ours, pca_scores), pca_scores, atol=1e-6)


def test_identical_frames_have_no_variance():
    x = np.tile([1.0, -2.0, 3.0], (20, 1))
    for kernel in ("linear", "rbf"):
        k = x @ x.T if kernel == "linear" else rbf_kernel(x, x, 0.5)
        assert np.abs(np.linalg.eigvalsh(center_kernel(k))).max() < 1e-9
        with pytest.warns(RankDeficient):
            model = kpca_fit(x, 3, kernel=kernel)
        assert model.n_components == 0


@pytest.mark.parametrize("set_id", [1, 2])
def test_feature_set_target_dims(set_id, rng):
    spec = FEATURE_SETS[set_id]
    frames = rng.normal(size=(300, spec.raw_dim))
    model = kpca_fit(frames, spec.reduced_dim)
    assert model.n_components == spec.reduced_dim
    assert kpca_transform(model, frames[:7]).shape == (7, spec.reduced_dim)


def test_feature_set_3_is_identity():
    spec = FEATURE_SETS[3]
    assert spec.reduction == "identity" and spec.raw_dim == spec.reduced_dim == 93
    assert [FEATURE_SETS[i].reduced_dim for i in (1, 2, 3)] == [30, 50, 93]


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_transform_reproduces_training_scores(kernel, rng):
    x = rng.normal(size=(60, 4))
    model = kpca_fit(x, 3, kernel=kernel)
    np.testing.assert_allclose(kpca_transform(model, x), fitted_scores(model), atol=1e-8)
    np.testing.assert_allclose(kpca_transform(model, x[5]), fitted_scores(model)[5], atol=1e-8)


@given(st.floats(-2.0, 3.0), st.integers(0, 10_000))
def test_linear_transform_is_affine(a, seed):
    rng = np.random.default_rng(seed)
    train = rng.normal(size=(40, 3))
    model = kpca_fit(train, 2, kernel="linear")
    x, y = rng.normal(size=(2, 3))
    lhs = kpca_transform(model, a * x + (1 - a) * y)
    rhs = a * kpca_transform(model, x) + (1 - a) * kpca_transform(model, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_rbf_four_points_match_dense_oracle():
    pts = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 1.5], [2.0, 1.0]])
    gamma = 0.7
    n = len(pts)
    k = np.array([[math.exp(-gamma * sum((pts[i] - pts[j]) ** 2)) for j in range(n)] for i in range(n)])
    one = np.full((n, n), 1.0 / n)
    kc = k - one @ k - k @ one + one @ k @ one
    vals, vecs = jacobi_eigh(kc)
    vals, vecs = vals[:2], vecs[:, :2]
    pivot = np.abs(vecs).argmax(axis=0)
    vecs = vecs * np.sign(vecs[pivot, [0, 1]])
    expected = vecs * np.sqrt(vals)

    model = kpca_fit(pts, 2, kernel="rbf", gamma=gamma)
    np.testing.assert_allclose(model.eigenvalues, vals, atol=1e-10)
    np.testing.assert_allclose(kpca_transform(model, pts), expected, atol=1e-6)


def test_sign_convention(rng):
    model = kpca_fit(rng.normal(size=(50, 6)), 4)
    vecs = model.alphas * np.sqrt(model.eigenvalues)
    pivot = np.abs(vecs).argmax(axis=0)
    assert np.all(vecs[pivot, np.arange(4)] > 0)


def test_explained_variance_rank_one(rng):
    direction = np.array([1.0, 2.0, -1.0])
    x = rng.normal(size=(80, 1)) * direction
    with pytest.warns(RankDeficient):
        model = kpca_fit(x, 2, kernel="linear")
    assert explained_variance(model)[0] == pytest.approx(1.0, abs=1e-9)


def test_explained_variance_isotropic(rng):
    model = kpca_fit(rng.normal(size=(2000, 2)), 2, kernel="linear", max_frames=2000)
    frac = explained_variance(model)
    np.testing.assert_allclose(frac, [0.5, 0.5], atol=0.1)
    assert frac.sum() == pytest.approx(1.0, abs=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_explained_variance_monotone_and_bounded(seed, k):
    x = np.random.default_rng(seed).normal(size=(12, 4))
    model = kpca_fit(x, k)
    frac = explained_variance(model)
    assert np.all(frac >= 0)
    assert np.all(np.diff(frac) <= 1e-12)
    assert frac.sum() <= 1 + 1e-9


def test_all_components_explain_everything(rng):
    x = rng.normal(size=(6, 3))
    model = kpca_fit(x, 5, kernel="rbf")
    assert explained_variance(model).sum() == pytest.approx(1.0, abs=1e-9)


def test_centred_kernel_rows_sum_to_zero(rng):
    x = rng.normal(size=(30, 5)) * 10
    kc = center_kernel(x @ x.T)
    assert np.abs(kc.sum(axis=1)).max() < 1e-6 * len(x) * np.abs(kc).max()


def test_training_projection_moments(rng):
    x = rng.normal(size=(100, 4))
    model = kpca_fit(x, 3)
    scores = kpca_transform(model, x)
    np.testing.assert_allclose(scores.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(scores.var(axis=0), model.eigenvalues / len(x), rtol=1e-8)


def test_subsampling_bounds_fit_size(rng):
    model = kpca_fit(rng.normal(size=(700, 3)), 2, max_frames=250, seed=3)
    assert model.training_frames.shape == (250, 3)


def test_dim_mismatch(rng):
    model = kpca_fit(rng.normal(size=(20, 3)), 2)
    with pytest.raises(DimMismatch):
        kpca_transform(model, np.zeros(4))
