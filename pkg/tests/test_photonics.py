import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvplace.photonics import (EfficiencyMap, analytic_map, efficiency_at_sigma_loc,
                               efficiency_curve, extrapolate_map, fit_saturation, mean_efficiency,
                               reduce_sweep, saturation_model)

POWERS = np.linspace(0.05, 3.0, 25)
TRUE = (969.3e3, 1.5e6, 2.0e4)


def test_saturation_noiseless_exact():
    fit = fit_saturation(POWERS, saturation_model(POWERS, *TRUE))
    assert (fit.pl_sat, fit.alpha_nv, fit.alpha_bg) == pytest.approx(TRUE, rel=1e-6)
    assert fit.knee_reached


def test_saturation_warns_below_knee():
    p = np.linspace(0.01, 0.2, 10)
    with pytest.warns(RuntimeWarning, match="knee"):
        fit = fit_saturation(p, saturation_model(p, *TRUE))
    assert not fit.knee_reached


@pytest.mark.parametrize("p,pl", [([1, 2, 3], [1, 2, 3]), ([0, 1, 2, 3, 4], [1, 2, 3, 4, 5])])
def test_saturation_bad_input(p, pl):
    with pytest.raises(ValueError):
        fit_saturation(p, pl)


def test_saturation_model_limits():
    # linear at low power, PL_sat + background slope at high power
    assert saturation_model(1e-6, *TRUE) == pytest.approx(1e-6 * (TRUE[1] + TRUE[2]), rel=1e-3)
    assert saturation_model(1e6, 1.0, 1.0, 0.0) == pytest.approx(1.0, rel=1e-5)


@given(st.floats(0, 2 * np.pi))
def test_extrapolation_axes(theta):
    emap = analytic_map(280.0)
    v = extrapolate_map(emap, np.array([50.0]), theta)
    ex = np.interp(50.0, emap.dr, emap.eta_x)
    ey = np.interp(50.0, emap.dr, emap.eta_y)
    assert v[0] == pytest.approx(np.cos(theta) ** 2 * ex + np.sin(theta) ** 2 * ey)


def test_theta_integral():
    """Integral over theta of the extrapolated map is pi (eta_x + eta_y)."""
    emap = analytic_map(280.0)
    th = (np.arange(4096) + 0.5) * 2 * np.pi / 4096
    for dr in (0.0, 40.0, 120.0):
        vals = extrapolate_map(emap, np.full_like(th, dr), th)
        integral = vals.sum() * 2 * np.pi / len(th)
        expected = np.pi * (np.interp(dr, emap.dr, emap.eta_x) + np.interp(dr, emap.dr, emap.eta_y))
        assert integral == pytest.approx(expected, rel=1e-12)


def test_extrapolation_outside_domain():
    with pytest.raises(ValueError):
        extrapolate_map(analytic_map(280.0), np.array([200.0]), 0.0)


def test_mean_efficiency_limits():
    emap = analytic_map(280.0)
    assert mean_efficiency(emap, 0.0) == {"mean_eta": emap.on_axis(), "sigma_loc_pillar": 0.0}
    assert mean_efficiency(emap, np.inf)["sigma_loc_pillar"] == pytest.approx(70.0, rel=1e-4)


def test_uniform_map_mean_is_constant():
    emap = EfficiencyMap(280.0, np.linspace(0, 140, 11), np.full(11, 0.3), np.full(11, 0.3))
    for s in (5.0, 50.0, 500.0):
        assert mean_efficiency(emap, s)["mean_eta"] == pytest.approx(0.3, rel=1e-12)


@given(st.floats(1.0, 300.0), st.floats(1.05, 3.0))
def test_mean_efficiency_monotone(s, factor):
    emap = analytic_map(280.0)
    a = mean_efficiency(emap, s)
    b = mean_efficiency(emap, s * factor)
    assert b["mean_eta"] <= a["mean_eta"] + 1e-12
    assert b["sigma_loc_pillar"] >= a["sigma_loc_pillar"] - 1e-9


@pytest.mark.parametrize("sigma0", [10.0, 60.0, 1e4])
def test_quadrature_converges(sigma0):
    emap = analytic_map(280.0)
    coarse = mean_efficiency(emap, sigma0, n_r=100, n_theta=32)
    fine = mean_efficiency(emap, sigma0, n_r=400, n_theta=128)
    assert coarse["mean_eta"] == pytest.approx(fine["mean_eta"], rel=1e-6)


def test_small_sigma_matches_untruncated():
    """Far from the wall, sigma_loc^pillar equals sigma0."""
    emap = analytic_map(280.0)
    assert mean_efficiency(emap, 15.0)["sigma_loc_pillar"] == pytest.approx(15.0, rel=1e-6)


def test_grid_map_matches_sweep_map():
    sweep = analytic_map(280.0, width_x=60.0, width_y=60.0)
    xs = np.linspace(-140, 140, 141)
    gx, gy = np.meshgrid(xs, xs)
    grid_eta = 0.4 * np.exp(-(gx ** 2 + gy ** 2) / (2 * 60.0 ** 2))
    grid = EfficiencyMap(280.0, grid_x=xs, grid_y=xs, grid_eta=grid_eta)
    a = mean_efficiency(sweep, 50.0, n_r=100, n_theta=32)["mean_eta"]
    b = mean_efficiency(grid, 50.0, n_r=100, n_theta=32)["mean_eta"]
    assert a == pytest.approx(b, rel=2e-3)


def test_reduce_sweep_weights():
    s = np.zeros((2, 3, 4))
    s[0] = 1.0
    s[1, 0] = 3.0
    assert reduce_sweep(s) == pytest.approx(np.full(4, 0.5 * (1 + 1.0)))
    assert reduce_sweep(s, [1.0, 0.0]) == pytest.approx(np.ones(4))


def test_efficiency_curve_and_lookup():
    emap = analytic_map(280.0)
    rows = efficiency_curve(emap, [0.0, 20.0, np.inf])
    assert rows[0][2] == pytest.approx(0.4)
    assert rows[-1][1] == pytest.approx(70.0, rel=1e-4)
    v = efficiency_at_sigma_loc(emap, 40.0)
    assert rows[-1][2] < v < 0.4


def test_map_validation():
    with pytest.raises(ValueError):
        EfficiencyMap(280.0, [1.0, 2.0], [0.1, 0.1], [0.1, 0.1])
    with pytest.raises(ValueError):
        EfficiencyMap(280.0, [0.0, 2.0], [0.1, 1.5], [0.1, 0.1])
