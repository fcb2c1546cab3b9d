"""Subspace dimension, simplex vertex search, non-negative abundances.

The vertex search is checked against exhaustive enumeration with an
independent (shoelace) volume formula, and the least-squares solver against
first-order optimality plus a projected-gradient reference solution.
"""

import itertools

import numpy as np
import pytest

from dsirc.core import DegenerateCovarianceError, PixelCloud
from dsirc.unmixing import (
    PurityField,
    RankDeficientDataError,
    UnmixingModel,
    abundances,
    avmax,
    hysime,
    nnls,
    project_affine_pca,
    purity,
    unmix,
)


def cloud_of(spectra):
    spectra = np.asarray(spectra, dtype=np.float64)
    n = spectra.shape[0]
    coords = np.column_stack([np.zeros(n, dtype=np.intp), np.arange(n, dtype=np.intp)])
    return PixelCloud(spectra, coords)


def smooth_endmembers(rng, p, bands):
    grid = np.arange(bands, dtype=np.float64)
    out = np.empty((p, bands))
    for i in range(p):
        s = np.zeros(bands)
        for _ in range(3):
            center = rng.uniform(0, bands - 1)
            width = rng.uniform(bands / 15, bands / 5)
            s += rng.uniform(0.3, 1.0) * np.exp(-((grid - center) ** 2) / (2 * width**2))
        out[i] = s / s.max()
    return out


def simplex_cloud(rng, p=3, bands=12, n=200, snr_db=None, pure=True):
    e = smooth_endmembers(rng, p, bands)
    a = rng.dirichlet(np.ones(p), size=n)
    if pure:
        a[:p] = np.eye(p)
    x = a @ e
    if snr_db is not None:
        signal_power = float(np.mean(np.sum(x**2, axis=1)))
        sigma = np.sqrt(signal_power / (10 ** (snr_db / 10.0) * bands))
        x = x + rng.normal(scale=sigma, size=x.shape)
    return cloud_of(x), e, a


# ---------------------------------------------------------------------------
# subspace dimension


def test_hysime_noiseless_three_endmembers():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        cloud, _, _ = simplex_cloud(rng, p=3, snr_db=None)
        assert hysime(cloud) == 3


def test_hysime_snr_20db_three_endmembers():
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        cloud, _, _ = simplex_cloud(rng, p=3, snr_db=20.0)
        assert hysime(cloud) == 3


def test_hysime_single_band_is_one():
    cloud = cloud_of(np.ones((10, 1)))
    assert hysime(cloud) == 1


def test_hysime_never_exceeds_bands_minus_one():
    rng = np.random.default_rng(2)
    cloud = cloud_of(rng.uniform(0.1, 1.0, size=(50, 4)))
    assert 1 <= hysime(cloud) <= 3


def test_hysime_zero_data_raises():
    with pytest.raises(DegenerateCovarianceError):
        hysime(cloud_of(np.zeros((10, 5))))


def test_hysime_needs_two_pixels():
    with pytest.raises(ValueError):
        hysime(cloud_of(np.ones((1, 5))))


# ---------------------------------------------------------------------------
# affine projection


def test_projection_preserves_distances_at_full_affine_rank():
    rng = np.random.default_rng(3)
    e = rng.standard_normal((3, 10))
    a = rng.dirichlet(np.ones(3), size=40)
    x = a @ e  # affine rank 2
    y = project_affine_pca(x, 2)
    assert y.shape == (40, 2)
    d_x = np.linalg.norm(x[:, None] - x[None, :], axis=2)
    d_y = np.linalg.norm(y[:, None] - y[None, :], axis=2)
    np.testing.assert_allclose(d_y, d_x, atol=1e-8)


def test_projection_output_is_centered():
    rng = np.random.default_rng(4)
    y = project_affine_pca(rng.standard_normal((30, 6)), 3)
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)


def test_projection_rejects_rank_deficient_requests():
    rng = np.random.default_rng(5)
    e = rng.standard_normal((2, 8))
    a = rng.dirichlet(np.ones(2), size=30)
    x = a @ e  # affine rank 1
    with pytest.raises(RankDeficientDataError):
        project_affine_pca(x, 2)
    with pytest.raises(RankDeficientDataError):
        project_affine_pca(np.ones((10, 4)), 1)


def test_projection_argument_validation():
    with pytest.raises(ValueError):
        project_affine_pca(np.zeros((5, 3)), 0)
    with pytest.raises(ValueError):
        project_affine_pca(np.zeros((5, 3)), 4)
    with pytest.raises(ValueError):
        project_affine_pca(np.zeros((1, 3)), 1)


# ---------------------------------------------------------------------------
# simplex vertex search vs exhaustive enumeration


def shoelace(points):
    (x1, y1), (x2, y2), (x3, y3) = points
    return abs(x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2))


def exhaustive_best(projected):
    best = -1.0
    best_combo = None
    for combo in itertools.combinations(range(projected.shape[0]), 3):
        vol = shoelace(projected[list(combo)])
        if vol > best:
            best = vol
            best_combo = combo
    return best, best_combo


def rows_to_indices(spectra, rows):
    return [int(np.flatnonzero((spectra == row).all(axis=1))[0]) for row in rows]


def test_avmax_matches_exhaustive_search():
    rng = np.random.default_rng(6)
    for trial in range(25):
        n = int(rng.integers(5, 13))
        bands = int(rng.integers(3, 8))
        spectra = rng.uniform(0.0, 1.0, size=(n, bands))
        cloud = cloud_of(spectra)
        got = avmax(cloud, 3, restarts=10, rng=trial)
        projected = project_affine_pca(spectra, 2)
        best, _ = exhaustive_best(projected)
        got_vol = shoelace(projected[rows_to_indices(spectra, got)])
        assert got_vol == pytest.approx(best, rel=1e-9)


def test_avmax_picks_pure_pixels_from_noiseless_simplex():
    rng = np.random.default_rng(7)
    cloud, e, _ = simplex_cloud(rng, p=3, n=80, snr_db=None, pure=True)
    got = avmax(cloud, 3, restarts=10, rng=0)
    np.testing.assert_allclose(np.sort(got, axis=0), np.sort(e, axis=0), atol=1e-12)


def test_avmax_returns_rows_sorted_by_pixel_index():
    rng = np.random.default_rng(8)
    spectra = rng.uniform(size=(15, 5))
    got = avmax(cloud_of(spectra), 3, rng=1)
    idx = rows_to_indices(spectra, got)
    assert idx == sorted(idx)


def test_avmax_is_deterministic_given_seed():
    rng = np.random.default_rng(9)
    spectra = rng.uniform(size=(30, 6))
    a = avmax(cloud_of(spectra), 4, rng=42)
    b = avmax(cloud_of(spectra), 4, rng=42)
    np.testing.assert_array_equal(a, b)


def test_avmax_single_endmember_is_farthest_from_mean():
    spectra = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [0.0, 2.0]])
    got = avmax(cloud_of(spectra), 1)
    np.testing.assert_array_equal(got, [[10.0, 0.0]])


def test_avmax_validation_and_degenerate_data():
    rng = np.random.default_rng(10)
    spectra = rng.uniform(size=(8, 4))
    with pytest.raises(ValueError):
        avmax(cloud_of(spectra), 0)
    with pytest.raises(ValueError):
        avmax(cloud_of(spectra), 9)
    with pytest.raises(ValueError):
        avmax(cloud_of(spectra), 6)  # p - 1 exceeds bands
    with pytest.raises(ValueError):
        avmax(cloud_of(spectra), 3, restarts=0)
    with pytest.raises(RankDeficientDataError):
        avmax(cloud_of(np.ones((8, 4))), 3)


# ---------------------------------------------------------------------------
# non-negative least squares


def projected_gradient_nnls(a, b, iters=50000):
    at_a = a.T @ a
    at_b = a.T @ b
    step = 1.0 / float(np.linalg.eigvalsh(at_a)[-1])
    x = np.zeros(a.shape[1])
    for _ in range(iters):
        x_new = np.maximum(x - step * (at_a @ x - at_b), 0.0)
        if np.linalg.norm(x_new - x) <= 1e-13 * max(1.0, np.linalg.norm(x)):
            return x_new
        x = x_new
    return x


def test_nnls_satisfies_kkt_and_matches_gradient_oracle():
    rng = np.random.default_rng(11)
    for trial in range(40):
        p = int(rng.integers(1, 6))
        bands = int(rng.integers(p + 1, 21))
        e = rng.uniform(0.0, 1.0, size=(p, bands))
        x = rng.uniform(0.0, 1.0, size=bands)
        sol = nnls(e, x)
        assert sol.shape == (p,) and np.all(sol >= 0)
        a = e.T
        grad = a.T @ (a @ sol - x)
        assert np.all(grad >= -1e-8)
        if np.any(sol > 1e-12):
            assert np.max(np.abs(grad[sol > 1e-12])) <= 1e-8
        ref = projected_gradient_nnls(a, x)
        f_sol = 0.5 * np.sum((a @ sol - x) ** 2)
        f_ref = 0.5 * np.sum((a @ ref - x) ** 2)
        assert abs(f_sol - f_ref) <= 1e-8


def test_nnls_recovers_interior_solution_exactly():
    rng = np.random.default_rng(12)
    for trial in range(10):
        e = rng.uniform(0.1, 1.0, size=(3, 10))
        target = rng.uniform(0.2, 1.0, size=3)
        x = target @ e
        np.testing.assert_allclose(nnls(e, x), target, atol=1e-8)


def test_nnls_validation():
    with pytest.raises(ValueError):
        nnls(np.ones((2, 3)), np.ones(4))
    with pytest.raises(ValueError):
        nnls(np.ones((4, 3)), np.ones(3))  # more endmembers than bands
    bad = np.ones((2, 3))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        nnls(bad, np.ones(3))


def test_abundances_rowwise():
    rng = np.random.default_rng(13)
    e = rng.uniform(0.1, 1.0, size=(3, 8))
    a_true = rng.dirichlet(np.ones(3), size=20)
    got = abundances(e, a_true @ e)
    assert got.shape == (20, 3)
    assert np.all(got >= 0)
    np.testing.assert_allclose(got, a_true, atol=1e-7)


# ---------------------------------------------------------------------------
# purity


def test_purity_hand_values():
    model = UnmixingModel(
        endmembers=np.ones((2, 4)),
        abundances=np.array([[0.2, 0.8], [0.0, 0.0], [0.3, 0.3]]),
    )
    field = purity(model)
    np.testing.assert_allclose(field.eta, [0.8, 0.5, 0.5])
    np.testing.assert_allclose(field.eta_hat, [1.0, 0.625, 0.625])


def test_purity_pure_pixels_score_one():
    rng = np.random.default_rng(14)
    e = rng.uniform(0.1, 1.0, size=(3, 6))
    a = np.vstack([np.eye(3), rng.dirichlet(np.ones(3), size=10)])
    field = purity(UnmixingModel(e, a))
    np.testing.assert_allclose(field.eta[:3], 1.0)
    assert field.eta_hat.max() == 1.0
    assert np.all(field.eta > 0) and np.all(field.eta <= 1)


def test_purity_field_validation():
    with pytest.raises(ValueError):
        PurityField(np.array([0.0, 0.5]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        PurityField(np.array([0.5]), np.array([0.5, 1.0]))


# ---------------------------------------------------------------------------
# full blind unmixing


def test_unmix_recovers_noiseless_model():
    rng = np.random.default_rng(15)
    cloud, e, a = simplex_cloud(rng, p=3, n=100, snr_db=None, pure=True)
    model = unmix(cloud, rng=0)
    assert model.p == 3
    np.testing.assert_allclose(
        np.sort(model.endmembers, axis=0), np.sort(e, axis=0), atol=1e-10
    )
    recon = model.abundances @ model.endmembers
    np.testing.assert_allclose(recon, cloud.spectra, atol=1e-6)


def test_unmix_with_explicit_p():
    rng = np.random.default_rng(16)
    cloud, _, _ = simplex_cloud(rng, p=3, n=60, snr_db=30.0)
    model = unmix(cloud, p=4, rng=0)
    assert model.p == 4
    assert model.abundances.shape == (60, 4)
