"""Saturation-curve fitting and collection-efficiency averaging over NV spread."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, optimize, special

from .localization import FitError


# ---------------------------------------------------------------- saturation

def saturation_model(p_exc, pl_sat, alpha_nv, alpha_bg):
    """PL = PL_sat / (1 + PL_sat / (alpha_nv P)) + alpha_bg P."""
    p_exc = np.asarray(p_exc, dtype=float)
    return pl_sat / (1.0 + pl_sat / (alpha_nv * p_exc)) + alpha_bg * p_exc


@dataclass
class SaturationFit:
    pl_sat: float
    alpha_nv: float
    alpha_bg: float
    covariance: np.ndarray
    knee_reached: bool = True

    @property
    def errors(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def knee_power(self):
        return self.pl_sat / self.alpha_nv

    def to_dict(self):
        e = self.errors
        return {"PL_sat_cps": self.pl_sat, "alpha_NV_cps_per_mW": self.alpha_nv,
                "alpha_bg_cps_per_mW": self.alpha_bg,
                "errors": {"PL_sat_cps": e[0], "alpha_NV_cps_per_mW": e[1],
                           "alpha_bg_cps_per_mW": e[2]},
                "knee_reached": self.knee_reached}


def fit_saturation(p_exc, pl):
    """Three-parameter least-squares fit of a saturation curve.

    Warns (``RuntimeWarning``) when the highest power does not reach the
    fitted knee ``PL_sat / alpha_nv``.
    """
    p = np.asarray(p_exc, dtype=float)
    y = np.asarray(pl, dtype=float)
    if p.shape != y.shape or len(p) < 5:
        raise ValueError("need at least 5 (power, PL) samples")
    if np.any(p <= 0) or len(np.unique(p)) != len(p):
        raise ValueError("powers must be positive and distinct")
    order = np.argsort(p)
    p, y = p[order], y[order]
    slope0 = y[0] / p[0]
    tail = max((y[-1] - y[-2]) / (p[-1] - p[-2]), 0.0)
    p0 = [max(y[-1] - tail * p[-1], 0.5 * y[-1]), slope0, tail]
    try:
        popt, pcov = optimize.curve_fit(saturation_model, p, y, p0=p0,
                                        bounds=([1e-12, 1e-12, 0.0], np.inf),
                                        x_scale="jac", max_nfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"saturation fit failed: {exc}") from exc
    fit = SaturationFit(*map(float, popt), covariance=pcov)
    if p[-1] < fit.knee_power:
        fit.knee_reached = False
        warnings.warn(f"maximum power {p[-1]:.4g} below saturation knee {fit.knee_power:.4g}",
                      RuntimeWarning, stacklevel=2)
    return fit


# ---------------------------------------------------------------- efficiency maps

@dataclass
class EfficiencyMap:
    """Collection efficiency inside a pillar.

    Built either from displacement sweeps along x and y (``dr`` with
    ``eta_x``/``eta_y``) or from a full grid (``grid_x``, ``grid_y``,
    ``grid_eta``, with ``grid_eta[iy, ix]``).
    """

    pillar_diameter: float
    dr: np.ndarray | None = None
    eta_x: np.ndarray | None = None
    eta_y: np.ndarray | None = None
    grid_x: np.ndarray | None = None
    grid_y: np.ndarray | None = None
    grid_eta: np.ndarray | None = None

    def __post_init__(self):
        if self.dr is not None:
            self.dr = np.asarray(self.dr, dtype=float)
            self.eta_x = np.asarray(self.eta_x, dtype=float)
            self.eta_y = np.asarray(self.eta_y, dtype=float)
            vals = np.concatenate([self.eta_x, self.eta_y])
            if self.dr[0] != 0 or np.any(np.diff(self.dr) <= 0):
                raise ValueError("dr must start at 0 and increase")
        elif self.grid_eta is not None:
            self.grid_x = np.asarray(self.grid_x, dtype=float)
            self.grid_y = np.asarray(self.grid_y, dtype=float)
            self.grid_eta = np.asarray(self.grid_eta, dtype=float)
            vals = self.grid_eta.ravel()
            self._interp = interpolate.RegularGridInterpolator(
                (self.grid_y, self.grid_x), self.grid_eta, bounds_error=True)
        else:
            raise ValueError("need axis sweeps or a full grid")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ValueError("efficiencies must lie in [0, 1]")

    @property
    def radius(self):
        return 0.5 * self.pillar_diameter

    @classmethod
    def from_sweeps(cls, pillar_diameter, dr, eta_x, eta_y, wavelength_weights=None):
        """Reduce raw sweeps of shape (n_wavelength, n_dipole, n_dr).

        Wavelengths are averaged with ``wavelength_weights`` (uniform by
        default), then the dipole orientations are averaged with equal weight.
        1-D inputs are taken as already reduced.
        """
        return cls(pillar_diameter, dr, reduce_sweep(eta_x, wavelength_weights),
                   reduce_sweep(eta_y, wavelength_weights))

    def eta(self, dx, dy):
        """Efficiency at lateral displacement (dx, dy)."""
        dx = np.asarray(dx, dtype=float)
        dy = np.asarray(dy, dtype=float)
        if self.dr is not None:
            r = np.hypot(dx, dy)
            theta = np.arctan2(dy, dx)
            return extrapolate_map(self, r, theta)
        pts = np.stack([dy, dx], axis=-1)
        return self._interp(pts)

    def on_axis(self):
        return float(self.eta(0.0, 0.0))


def reduce_sweep(sweep, wavelength_weights=None):
    s = np.asarray(sweep, dtype=float)
    if s.ndim == 1:
        return s
    if s.ndim != 3:
        raise ValueError("sweep must be (n_dr,) or (n_wavelength, n_dipole, n_dr)")
    w = np.ones(s.shape[0]) if wavelength_weights is None else np.asarray(wavelength_weights, float)
    per_dipole = np.tensordot(w / w.sum(), s, axes=(0, 0))
    return per_dipole.mean(axis=0)


def extrapolate_map(emap, dr, theta):
    """cos^2(theta) eta_x(dr) + sin^2(theta) eta_y(dr)."""
    dr = np.asarray(dr, dtype=float)
    if np.any(dr < 0) or np.any(dr > emap.dr[-1] * (1 + 1e-12)):
        raise ValueError(f"dr outside sweep domain [0, {emap.dr[-1]}] nm")
    ex = np.interp(dr, emap.dr, emap.eta_x)
    ey = np.interp(dr, emap.dr, emap.eta_y)
    c2 = np.cos(theta) ** 2
    return c2 * ex + (1.0 - c2) * ey


def analytic_map(pillar_diameter, eta0=0.4, width_x=None, width_y=None, n=101):
    """Radially decaying synthetic map for tests and demos."""
    r = 0.5 * pillar_diameter
    wx = width_x or 0.5 * r
    wy = width_y or 0.7 * r
    dr = np.linspace(0.0, r, n)
    return EfficiencyMap(pillar_diameter, dr, eta0 * np.exp(-dr ** 2 / (2 * wx ** 2)),
                         eta0 * np.exp(-dr ** 2 / (2 * wy ** 2)))


def mean_efficiency(emap, sigma0, n_r=200, n_theta=64):
    """Mean efficiency and sigma_loc^pillar for a Gaussian spread truncated at the wall.

    The distribution is an isotropic 2-D Gaussian of width ``sigma0`` set to
    zero outside the pillar radius and renormalised. ``sigma0 = inf`` gives
    the uniform disk. Integration is Gauss-Legendre in r, uniform in theta.
    """
    if sigma0 < 0:
        raise ValueError("sigma0 must be non-negative")
    if sigma0 == 0:
        return {"mean_eta": emap.on_axis(), "sigma_loc_pillar": 0.0}
    R = emap.radius
    # keep r-nodes where the weight lives for narrow spreads
    r_max = R if not np.isfinite(sigma0) else min(R, 12.0 * sigma0)
    x, wq = special.roots_legendre(n_r)
    r = 0.5 * r_max * (x + 1.0)
    wr = 0.5 * r_max * wq
    if np.isfinite(sigma0):
        weight = np.exp(-r * r / (2.0 * sigma0 * sigma0))
    else:
        weight = np.ones_like(r)
    theta = (np.arange(n_theta) + 0.5) * (2.0 * np.pi / n_theta)
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    eta = emap.eta(rr * np.cos(tt), rr * np.sin(tt))
    radial = wr * weight * r
    norm = radial.sum() * 2.0 * np.pi
    mean_eta = float((radial[:, None] * eta).sum() * (2.0 * np.pi / n_theta) / norm)
    second = float((radial * r * r).sum() * 2.0 * np.pi / norm)
    return {"mean_eta": mean_eta, "sigma_loc_pillar": math.sqrt(second / 2.0)}


def efficiency_curve(emap, sigma0_values, **kw):
    """(sigma0, sigma_loc^pillar, mean_eta) rows for a sweep of spreads."""
    rows = []
    for s in sigma0_values:
        res = mean_efficiency(emap, s, **kw)
        rows.append((float(s), res["sigma_loc_pillar"], res["mean_eta"]))
    return rows


def efficiency_at_sigma_loc(emap, sigma_loc, sigma0_grid=None):
    """Mean efficiency at a given sigma_loc^pillar, by interpolating the sweep."""
    if sigma0_grid is None:
        sigma0_grid = np.concatenate([np.geomspace(1.0, 20 * emap.radius, 200), [np.inf]])
    rows = np.array(efficiency_curve(emap, sigma0_grid))
    s_loc, eta = rows[:, 1], rows[:, 2]
    if not s_loc[0] <= sigma_loc <= s_loc[-1]:
        raise ValueError(f"sigma_loc {sigma_loc} nm outside [{s_loc[0]:.3g}, {s_loc[-1]:.3g}] nm")
    return float(np.interp(sigma_loc, s_loc, eta))
