import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvplace.localization import (AffineTransform2D, FitError, PixelImage, UnresolvableError,
                                  decompose_sigma, diffusion_lower_bound, find_peaks, fit_affine,
                                  fit_gaussian2d, fit_power_law, gaussian2d, match_points,
                                  radial_profile, sigma_loc_from_positions, synthetic_spot_array,
                                  tile_average)


def gaussian_image(sigma=250.0, x0=0.0, y0=0.0, n=81, pitch=40.0, amp=1.0, offset=0.1):
    origin = (-(n // 2) * pitch, -(n // 2) * pitch)
    img = PixelImage(np.zeros((n, n)), pitch, origin)
    x, y = img.coords()
    return PixelImage(gaussian2d(x, y, amp, x0, y0, sigma, offset), pitch, origin)


@given(st.floats(50, 400), st.floats(0, 150), st.floats(0, 150))
def test_decompose_compose_identity(loc, psf, sys_):
    tot = math.sqrt(loc ** 2 + psf ** 2 + sys_ ** 2)
    assert decompose_sigma(tot, psf, sys_).sigma_loc == pytest.approx(loc, rel=1e-9)


def test_decompose_unresolvable():
    with pytest.raises(UnresolvableError) as err:
        decompose_sigma(200.0, 235.0, 41.0)
    assert err.value.deficit == pytest.approx(235 ** 2 + 41 ** 2 - 200 ** 2)


def test_decompose_error_propagation():
    b = decompose_sigma(260.0, 235.0, 41.0, errors=(2.0, 0.0, 0.0))
    assert b.sigma_loc_err == pytest.approx(260.0 * 2.0 / b.sigma_loc)


def test_gaussian_fit_exact():
    fit = fit_gaussian2d(gaussian_image(sigma=250.0, x0=30.0, y0=-45.0))
    assert fit.sigma_tot == pytest.approx(250.0, rel=1e-6)
    assert (fit.x0, fit.y0) == pytest.approx((30.0, -45.0), abs=1e-4)
    assert fit.offset == pytest.approx(0.1, abs=1e-8)


@given(st.integers(-10, 10), st.integers(-10, 10))
def test_fit_translation_equivariance(kx, ky):
    base = gaussian_image(sigma=200.0)
    moved = PixelImage(base.data, base.pitch, (base.origin[0] + kx * 40.0, base.origin[1] + ky * 40.0))
    a, b = fit_gaussian2d(base), fit_gaussian2d(moved)
    assert b.x0 - a.x0 == pytest.approx(kx * 40.0, abs=1e-4)
    assert b.y0 - a.y0 == pytest.approx(ky * 40.0, abs=1e-4)
    assert b.sigma_tot == pytest.approx(a.sigma_tot, rel=1e-8)


def test_fit_flat_image_raises():
    with pytest.raises(FitError):
        fit_gaussian2d(PixelImage(np.full((30, 30), 3.0), 40.0))


def test_tile_average_linear():
    """Tile averaging commutes with linear combinations of images."""
    rng = np.random.default_rng(0)
    a = PixelImage(rng.random((100, 120)), 40.0)
    b = PixelImage(rng.random((100, 120)), 40.0)
    targets = [(1000.0, 1000.0), (2400.0, 1800.0), (3000.0, 2000.0)]
    combo = PixelImage(2.0 * a.data + 3.0 * b.data, 40.0)
    lhs = tile_average(combo, targets, 800.0).image.data
    rhs = 2.0 * tile_average(a, targets, 800.0).image.data + 3.0 * tile_average(b, targets, 800.0).image.data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_tile_average_skips_edge_tiles():
    img = PixelImage(np.ones((50, 50)), 40.0)
    res = tile_average(img, [(1000.0, 1000.0), (10.0, 10.0)], 800.0)
    assert (res.n_used, res.n_skipped) == (1, 1)
    with pytest.raises(ValueError):
        tile_average(img, [(10.0, 10.0)], 800.0)


def test_synthetic_mesa_round_trip():
    img, design, _ = synthetic_spot_array(seed=1)
    fit = fit_gaussian2d(tile_average(img, design, 2000.0).image)
    assert decompose_sigma(fit.sigma_tot, 235.0, 41.0).sigma_loc == pytest.approx(102.0, rel=0.05)


def test_bundled_mesa_fixture(data_dir):
    import csv
    img = PixelImage.load(data_dir / "mesa_image.txt.gz")
    with open(data_dir / "mesa_targets.csv") as fh:
        design = np.array([[float(r["x_nm"]), float(r["y_nm"])] for r in csv.DictReader(fh)])
    assert len(design) == 162
    fit = fit_gaussian2d(tile_average(img, design, 2000.0).image)
    assert decompose_sigma(fit.sigma_tot, 235.0, 41.0).sigma_loc == pytest.approx(102.0, rel=0.05)


def test_image_save_load_round_trip(tmp_path):
    img = gaussian_image()
    img.save(tmp_path / "img.txt")
    back = PixelImage.load(tmp_path / "img.txt")
    np.testing.assert_allclose(back.data, img.data, rtol=1e-9)
    assert back.origin == img.origin and back.pitch == img.pitch


def test_radial_profile_of_gaussian():
    img = gaussian_image(sigma=200.0, offset=0.0)
    r, mean, se = radial_profile(img, (0.0, 0.0), 40.0)
    assert np.all(np.diff(mean[:10]) < 0)
    assert mean[0] == pytest.approx(np.exp(-r[0] ** 2 / (2 * 200 ** 2)), rel=0.05)
    assert np.all(se >= 0)


def test_affine_exact_recovery():
    rng = np.random.default_rng(2)
    design = rng.uniform(0, 30000, (40, 2))
    true = AffineTransform2D([[1.01, 0.02], [-0.015, 0.99]], [120.0, -80.0])
    detected = true.inverse().apply(design)
    t, rmse = fit_affine(detected, design)
    np.testing.assert_allclose(t.linear, true.linear, atol=1e-10)
    np.testing.assert_allclose(t.translation, true.translation, atol=1e-6)
    assert rmse < 1e-6


@pytest.mark.parametrize("n", [20, 162])
def test_affine_noise_floor(n):
    """With iid 5 nm noise per axis, E[RMSE^2] = 2 sigma^2 (n - 3) / n."""
    rng = np.random.default_rng(n)
    gx, gy = np.meshgrid(np.arange(18) * 2000.0, np.arange(9) * 2000.0)
    design = np.column_stack([gx.ravel(), gy.ravel()])[:n]
    sq = []
    for _ in range(200):
        detected = design + rng.normal(0, 5.0, design.shape)
        sq.append(fit_affine(detected, design)[1] ** 2)
    expected = 25.0 * (2 - 6 / n)
    assert np.mean(sq) == pytest.approx(expected, rel=0.1)


def test_affine_degenerate():
    line = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(ValueError):
        fit_affine(line, line)
    with pytest.raises(ValueError):
        fit_affine(line[:2], line[:2])


def test_find_and_match_peaks():
    img, design, offsets = synthetic_spot_array(n_cols=4, n_rows=3, seed=2)
    peaks = find_peaks(img, 1000.0)
    assert len(peaks) == 12
    det, des = match_points(peaks, design, 800.0)
    assert len(det) == 12
    np.testing.assert_allclose(np.sort(np.linalg.norm(det - des, axis=1)),
                               np.sort(np.linalg.norm(offsets, axis=1)), atol=15.0)


def test_sigma_loc_from_positions():
    pts = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 4.0], [0.0, -4.0]])
    assert sigma_loc_from_positions(pts) == pytest.approx(math.sqrt(50 / 8))


def test_diffusion_lower_bound():
    assert diffusion_lower_bound(280.0, 660.0) == pytest.approx(3.712, abs=1e-3)


def test_power_law_fit():
    n = np.geomspace(1e3, 1e5, 7)
    pref, expo, r2 = fit_power_law(n, 3.0 * n ** 0.5)
    assert (pref, expo, r2) == pytest.approx((3.0, 0.5, 1.0))


def test_invert_diffusion_constant_self_consistent():
    from nvplace.diffusion import LatticeConfig, Scenario
    from nvplace.geometry import DeviceGeometry, DopedLayer
    from nvplace.localization import invert_diffusion_constant
    from nvplace.vacancy_source import BeamParams

    sc = Scenario(DeviceGeometry.bulk(2000.0), (DopedLayer(53.0, 3.66, 1.736e12),),
                  BeamParams(dose_pC=800.0), LatticeConfig(cell_size=2.0),
                  nitrogen_window=600.0)
    inv = invert_diffusion_constant(60.0, sc, n_min=1000, n_max=8000, n_points=3, n_trials=2, seed=1)
    assert np.all(np.diff(inv.sigma_loc) > 0)
    assert 1000 <= inv.n_jumps <= 8000
    assert inv.diffusion_constant == pytest.approx(4.0 * inv.n_jumps / (6 * 660.0))
    with pytest.raises(ValueError):
        invert_diffusion_constant(1e4, sc, n_min=1000, n_max=8000, n_points=3, n_trials=2, seed=1)
