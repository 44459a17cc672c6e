"""Lateral positioning precision: image pipeline, variance budget and D inversion.

Lengths are nm throughout. The image pipeline is

    detected peaks --fit_affine--> registration residual (sigma_sys)
    image --tile_average--> averaged spot --fit_gaussian2d--> sigma_tot
    (sigma_tot, sigma_psf, sigma_sys) --decompose_sigma--> sigma_loc
"""
from __future__ import annotations

import gzip
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from .diffusion import as_seed_sequence, diffusion_constant_from_jumps, simulate_ensemble


class FitError(RuntimeError):
    """A fit did not converge or the input has nothing to fit."""


class UnresolvableError(ValueError):
    """Measured spread is below the instrument floor."""

    def __init__(self, deficit):
        self.deficit = deficit
        super().__init__(
            f"sigma_tot is unresolvable below the instrument floor "
            f"(sigma_tot^2 short by {deficit:.4g} nm^2)")


# ---------------------------------------------------------------- images

@dataclass
class PixelImage:
    """Intensity grid; ``origin`` is the lab position (x, y) of pixel [0, 0].

    Rows run along y, columns along x.
    """

    data: np.ndarray
    pitch: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("image data must be 2-D")
        if not self.pitch > 0:
            raise ValueError("pixel pitch must be positive")
        if np.any(self.data < 0):
            raise ValueError("intensities must be non-negative")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    def coords(self):
        ny, nx = self.data.shape
        xs = self.origin[0] + self.pitch * np.arange(nx)
        ys = self.origin[1] + self.pitch * np.arange(ny)
        return np.meshgrid(xs, ys)

    def shifted(self, kx, ky):
        return PixelImage(np.roll(self.data, (ky, kx), axis=(0, 1)), self.pitch, self.origin)

    def save(self, path, fmt="%.10g"):
        """Plain-text grid with a one-line ``# pitch origin_x origin_y ny nx`` header.

        A ``.gz`` suffix writes a compressed file.
        """
        ny, nx = self.data.shape
        header = f"pitch_nm={self.pitch!r} origin_x_nm={self.origin[0]!r} origin_y_nm={self.origin[1]!r} ny={ny} nx={nx}"
        np.savetxt(path, self.data, header=header, fmt=fmt)

    @classmethod
    def load(cls, path):
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "rt") as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing image header line")
        meta = dict(item.split("=") for item in first[1:].split())
        data = np.loadtxt(path, ndmin=2)
        shape = (int(meta["ny"]), int(meta["nx"]))
        if data.shape != shape:
            raise ValueError(f"{path}: header shape {shape} does not match data {data.shape}")
        return cls(data, float(meta["pitch_nm"]),
                   (float(meta["origin_x_nm"]), float(meta["origin_y_nm"])))


@dataclass
class TileAverage:
    image: PixelImage
    n_used: int
    n_skipped: int


def tile_average(image, targets, tile_size):
    """Pixel-wise mean of square tiles centred on the nearest pixel to each target.

    Tiles that would cross the image edge are skipped and counted. The output
    has the input pitch and its origin puts the target at (0, 0).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    half = int(round(0.5 * tile_size / image.pitch))
    ny, nx = image.data.shape
    acc = np.zeros((2 * half + 1, 2 * half + 1))
    used = skipped = 0
    for tx, ty in targets[:, :2]:
        cx = int(round((tx - image.origin[0]) / image.pitch))
        cy = int(round((ty - image.origin[1]) / image.pitch))
        if cx - half < 0 or cy - half < 0 or cx + half >= nx or cy + half >= ny:
            skipped += 1
            continue
        acc += image.data[cy - half:cy + half + 1, cx - half:cx + half + 1]
        used += 1
    if used == 0:
        raise ValueError(f"all {skipped} tiles fall outside the image")
    out = PixelImage(acc / used, image.pitch, (-half * image.pitch, -half * image.pitch))
    return TileAverage(out, used, skipped)


# ---------------------------------------------------------------- Gaussian fit

@dataclass
class GaussianFit2D:
    amplitude: float
    x0: float
    y0: float
    sigma_tot: float
    offset: float
    covariance: np.ndarray

    @property
    def errors(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def sigma_tot_err(self):
        return float(self.errors[3])

    def model(self, x, y):
        return gaussian2d(x, y, self.amplitude, self.x0, self.y0, self.sigma_tot, self.offset)

    def to_dict(self):
        err = self.errors
        return {"amplitude": self.amplitude, "x0_nm": self.x0, "y0_nm": self.y0,
                "sigma_tot_nm": self.sigma_tot, "offset": self.offset,
                "errors": {"amplitude": err[0], "x0_nm": err[1], "y0_nm": err[2],
                           "sigma_tot_nm": err[3], "offset": err[4]}}


def gaussian2d(x, y, amplitude, x0, y0, sigma, offset):
    r2 = (x - x0) ** 2 + (y - y0) ** 2
    return amplitude * np.exp(-r2 / (2.0 * sigma * sigma)) + offset


def fit_gaussian2d(image):
    """Isotropic 2-D Gaussian plus constant offset, fitted by Levenberg-Marquardt."""
    z = image.data
    span = float(z.max() - z.min())
    if not np.isfinite(span) or span <= 1e-12 * max(1.0, abs(float(z.max()))):
        raise FitError("flat image: no peak to fit")
    x, y = image.coords()
    offset0 = float(np.percentile(z, 5))
    w = np.clip(z - offset0, 0, None)
    wsum = w.sum()
    x0 = float((w * x).sum() / wsum)
    y0 = float((w * y).sum() / wsum)
    iy, ix = np.unravel_index(np.argmax(z), z.shape)
    r2 = ((x - x0) ** 2 + (y - y0) ** 2)
    sigma0 = math.sqrt(max((w * r2).sum() / wsum / 2.0, image.pitch ** 2))
    p0 = [span, x[iy, ix], y[iy, ix], sigma0, offset0]

    def f(xy, *p):
        return gaussian2d(xy[0], xy[1], *p)

    try:
        popt, pcov, info, msg, ier = optimize.curve_fit(
            f, (x.ravel(), y.ravel()), z.ravel(), p0=p0, full_output=True, maxfev=10000)
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        raise FitError(f"2-D Gaussian fit failed: {exc} (start {p0})") from exc
    if ier not in (1, 2, 3, 4) or not np.all(np.isfinite(popt)):
        raise FitError(f"2-D Gaussian fit did not converge: {msg} (start {p0})")
    popt[3] = abs(popt[3])
    if popt[0] <= 0:
        raise FitError(f"fitted amplitude {popt[0]:.4g} is not a peak")
    return GaussianFit2D(*map(float, popt), covariance=pcov)


def radial_profile(image, center=(0.0, 0.0), bin_size=40.0):
    """Angular average about ``center``: bin centres, mean and standard error."""
    x, y = image.coords()
    r = np.hypot(x - center[0], y - center[1]).ravel()
    z = image.data.ravel()
    idx = (r // bin_size).astype(int)
    nb = idx.max() + 1
    n = np.bincount(idx, minlength=nb)
    s = np.bincount(idx, weights=z, minlength=nb)
    s2 = np.bincount(idx, weights=z * z, minlength=nb)
    keep = n > 0
    mean = np.where(keep, s / np.maximum(n, 1), np.nan)
    var = np.where(n > 1, (s2 - n * mean ** 2) / np.maximum(n - 1, 1), 0.0)
    se = np.sqrt(np.clip(var, 0, None) / np.maximum(n, 1))
    centers = (np.arange(nb) + 0.5) * bin_size
    return centers[keep], mean[keep], se[keep]


# ---------------------------------------------------------------- registration

@dataclass
class AffineTransform2D:
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(2, 2)
        self.translation = np.asarray(self.translation, dtype=float).reshape(2)
        if abs(np.linalg.det(self.linear)) < 1e-12:
            raise ValueError("affine linear part is singular")

    def apply(self, points):
        p = np.asarray(points, dtype=float)[:, :2]
        return p @ self.linear.T + self.translation

    def inverse(self):
        inv = np.linalg.inv(self.linear)
        return AffineTransform2D(inv, -inv @ self.translation)

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))


def fit_affine(detected, design):
    """Least-squares affine map detected -> design.

    Returns the transform and the post-fit RMSE of the 2-D displacements,
    ``sqrt(mean |residual|^2)``, which is the residual systematic error.
    """
    src = np.asarray(detected, dtype=float)[:, :2]
    dst = np.asarray(design, dtype=float)[:, :2]
    if src.shape != dst.shape:
        raise ValueError("detected and design need the same number of points")
    if len(src) < 3:
        raise ValueError("need at least 3 correspondences")
    design_matrix = np.hstack([src, np.ones((len(src), 1))])
    if np.linalg.matrix_rank(design_matrix) < 3:
        raise ValueError("correspondences are collinear or degenerate")
    sol, *_ = np.linalg.lstsq(design_matrix, dst, rcond=None)
    transform = AffineTransform2D(sol[:2].T, sol[2])
    resid = transform.apply(src) - dst
    rmse = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return transform, rmse


def find_peaks(image, min_distance, threshold=None, window=None):
    """Local maxima refined by an intensity centroid; returns lab (x, y) in nm.

    ``min_distance`` and ``window`` are in nm. ``threshold`` defaults to
    halfway between the image median and maximum.
    """
    z = image.data
    if threshold is None:
        threshold = 0.5 * (np.median(z) + z.max())
    size = max(3, 2 * int(round(min_distance / image.pitch)) + 1)
    is_max = (z == ndimage.maximum_filter(z, size=size, mode="nearest")) & (z > threshold)
    half = max(1, int(round((window or min_distance) / (2 * image.pitch))))
    ny, nx = z.shape
    base = np.median(z)
    peaks = []
    for iy, ix in zip(*np.nonzero(is_max)):
        y0, y1 = max(0, iy - half), min(ny, iy + half + 1)
        x0, x1 = max(0, ix - half), min(nx, ix + half + 1)
        w = np.clip(z[y0:y1, x0:x1] - base, 0, None)
        gy, gx = np.mgrid[y0:y1, x0:x1]
        tot = w.sum()
        cx = (w * gx).sum() / tot if tot > 0 else ix
        cy = (w * gy).sum() / tot if tot > 0 else iy
        peaks.append((image.origin[0] + cx * image.pitch, image.origin[1] + cy * image.pitch))
    return np.array(peaks).reshape(-1, 2)


def match_points(detected, design, max_distance):
    """Pair each design point with its nearest detected point within ``max_distance``."""
    detected = np.asarray(detected, dtype=float)[:, :2]
    design = np.asarray(design, dtype=float)[:, :2]
    d = np.linalg.norm(design[:, None, :] - detected[None, :, :], axis=2)
    j = np.argmin(d, axis=1)
    ok = d[np.arange(len(design)), j] <= max_distance
    return detected[j[ok]], design[ok]


# ---------------------------------------------------------------- variance budget

@dataclass
class VarianceBudget:
    sigma_tot: float
    sigma_loc: float
    sigma_psf: float
    sigma_sys: float
    sigma_loc_err: float = 0.0

    def to_dict(self):
        return {"sigma_tot_nm": self.sigma_tot, "sigma_loc_nm": self.sigma_loc,
                "sigma_psf_nm": self.sigma_psf, "sigma_sys_nm": self.sigma_sys,
                "sigma_loc_err_nm": self.sigma_loc_err}


def decompose_sigma(sigma_tot, sigma_psf, sigma_sys, errors=(0.0, 0.0, 0.0)):
    """sigma_loc = sqrt(sigma_tot^2 - sigma_psf^2 - sigma_sys^2) with first-order errors."""
    radicand = sigma_tot ** 2 - sigma_psf ** 2 - sigma_sys ** 2
    if radicand < 0:
        raise UnresolvableError(-radicand)
    loc = math.sqrt(radicand)
    e_tot, e_psf, e_sys = errors
    if loc > 0:
        err = math.sqrt((sigma_tot * e_tot) ** 2 + (sigma_psf * e_psf) ** 2
                        + (sigma_sys * e_sys) ** 2) / loc
    else:
        err = math.inf if any(errors) else 0.0
    return VarianceBudget(sigma_tot, loc, sigma_psf, sigma_sys, err)


def sigma_loc_from_positions(positions, target=(0.0, 0.0)):
    """Pooled per-axis RMS deviation from ``target``: sqrt(sum(dx^2 + dy^2) / 2N)."""
    p = np.asarray(positions, dtype=float)
    if p.ndim != 2 or len(p) < 2:
        raise ValueError("need at least 2 positions")
    dx = p[:, 0] - target[0]
    dy = p[:, 1] - target[1]
    return float(np.sqrt(np.sum(dx * dx + dy * dy) / (2 * len(p))))


# ---------------------------------------------------------------- diffusion constant

def diffusion_lower_bound(pillar_diameter, t_anneal):
    """Smallest D with 2 sqrt(2 D t) = diameter / 2."""
    return (pillar_diameter / 4.0) ** 2 / (2.0 * t_anneal)


@dataclass
class DiffusionInversion:
    n_jumps: float
    diffusion_constant: float
    grid: np.ndarray
    sigma_loc: np.ndarray
    n_nv: np.ndarray
    power_law: tuple  # (prefactor, exponent)
    fit_r2: float

    def to_dict(self):
        return {"n_jumps": self.n_jumps, "D_nm2_per_s": self.diffusion_constant,
                "power_law_prefactor": self.power_law[0],
                "power_law_exponent": self.power_law[1], "fit_r2": self.fit_r2,
                "grid": [{"n_jumps": int(n), "sigma_loc_nm": float(s), "n_nv": int(k)}
                         for n, s, k in zip(self.grid, self.sigma_loc, self.n_nv)]}


def sigma_loc_curve(scenario, grid, n_trials, seed, workers=1):
    """Simulated sigma_loc at each total jump count in ``grid``."""
    sig, counts = [], []
    children = as_seed_sequence(seed).spawn(len(grid))
    for n_jumps, child in zip(grid, children):
        sc = scenario.with_lattice(
            diffusion_constant=diffusion_constant_from_jumps(
                int(n_jumps), scenario.lattice.cell_size, scenario.lattice.anneal_time))
        res = simulate_ensemble(sc, n_trials, child, workers=workers)
        pos = res.pooled_nv_positions()
        counts.append(len(pos))
        sig.append(sigma_loc_from_positions(pos, scenario.target[:2]) if len(pos) >= 2 else np.nan)
    return np.array(sig), np.array(counts)


def fit_power_law(n, sigma):
    """Least squares in log-log space; returns (prefactor, exponent, r2)."""
    ln_n, ln_s = np.log(n), np.log(sigma)
    k, c = np.polyfit(ln_n, ln_s, 1)
    pred = c + k * ln_n
    ss_res = np.sum((ln_s - pred) ** 2)
    ss_tot = np.sum((ln_s - ln_s.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return math.exp(c), k, r2


def invert_diffusion_constant(sigma_loc_target, scenario, a=None, t_anneal=None,
                              n_min=1e3, n_max=1e5, n_points=9, n_trials=10,
                              seed=0, fit_fraction=0.5, workers=1):
    """Jump count and D that reproduce a measured sigma_loc.

    Runs the engine over a log-spaced jump grid, fits a power law to the
    upper ``fit_fraction`` of the grid and inverts it at the target.
    """
    if a is not None:
        scenario = scenario.with_lattice(cell_size=a)
    if t_anneal is not None:
        scenario = scenario.with_lattice(anneal_time=t_anneal)
    lattice = scenario.lattice
    grid = np.unique(np.round(np.geomspace(n_min, n_max, n_points)).astype(int))
    sig, counts = sigma_loc_curve(scenario, grid, n_trials, seed, workers=workers)
    ok = np.isfinite(sig)
    if ok.sum() < 2:
        raise FitError("too few NVs formed to build the sigma_loc curve")
    lo_s, hi_s = np.nanmin(sig), np.nanmax(sig)
    if not lo_s <= sigma_loc_target <= hi_s:
        raise ValueError(f"target sigma_loc {sigma_loc_target} nm outside simulated range "
                         f"[{lo_s:.1f}, {hi_s:.1f}] nm")
    g, s = grid[ok], sig[ok]
    start = int(math.floor(len(g) * (1.0 - fit_fraction)))
    start = min(start, len(g) - 2)
    pref, expo, r2 = fit_power_law(g[start:], s[start:])
    n_target = (sigma_loc_target / pref) ** (1.0 / expo)
    d = diffusion_constant_from_jumps(n_target, lattice.cell_size, lattice.anneal_time)
    return DiffusionInversion(float(n_target), float(d), grid, sig, counts, (pref, expo), r2)


# ---------------------------------------------------------------- synthetic data

def _standardize(offsets, rms):
    """Rescale centred 2-D offsets to an exact pooled per-axis RMS."""
    d = offsets - offsets.mean(axis=0)
    cur = math.sqrt(np.sum(d * d) / (2 * len(d)))
    return d * (rms / cur) if cur > 0 else d


def _stratified_gaussian(n, rng):
    """Isotropic unit 2-D Gaussian cloud from radial quantiles and golden-angle azimuths."""
    u = (np.arange(n) + 0.5) / n
    r = np.sqrt(-2.0 * np.log1p(-u))
    theta = rng.uniform(0.0, 2.0 * np.pi) + np.arange(n) * np.pi * (3.0 - math.sqrt(5.0))
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts[rng.permutation(n)]


def synthetic_spot_array(n_cols=18, n_rows=9, spacing=2000.0, pitch=40.0, sigma_psf=235.0,
                         sigma_loc=102.0, sigma_sys=41.0, seed=0, margin=1500.0,
                         amplitude=1.0, background=0.05, noise=0.0, stratified=True):
    """Grid of Gaussian spots with known placement and registration scatter.

    Each spot sits at its design position plus a placement offset (pooled
    RMS ``sigma_loc``) plus a registration offset (pooled RMS ``sigma_sys``);
    both sets are decorrelated and rescaled to their exact RMS so the fixture carries the
    stated values rather than sampled ones. ``stratified`` draws each set
    from Gaussian quantiles so its shape, not only its RMS, is Gaussian.
    Returns (image, design, offsets).
    """
    rng = np.random.default_rng(seed)
    draw = _stratified_gaussian if stratified else (lambda k, g: g.normal(size=(k, 2)))
    gx, gy = np.meshgrid(np.arange(n_cols) * spacing, np.arange(n_rows) * spacing)
    design = np.column_stack([gx.ravel(), gy.ravel()]) + margin
    n = len(design)
    loc = _standardize(draw(n, rng), sigma_loc)
    sys_ = draw(n, rng)
    sys_ = sys_ - sys_.mean(axis=0)
    # no cross-covariance, so the variances add exactly
    sys_ -= loc @ np.linalg.lstsq(loc, sys_, rcond=None)[0]
    offsets = loc + _standardize(sys_, sigma_sys)
    nx = int(math.ceil(((n_cols - 1) * spacing + 2 * margin) / pitch)) + 1
    ny = int(math.ceil(((n_rows - 1) * spacing + 2 * margin) / pitch)) + 1
    data = np.full((ny, nx), float(background))
    half = int(math.ceil(6 * sigma_psf / pitch))
    for (px, py) in design + offsets:
        cx, cy = int(round(px / pitch)), int(round(py / pitch))
        x0, x1 = max(cx - half, 0), min(cx + half + 1, nx)
        y0, y1 = max(cy - half, 0), min(cy + half + 1, ny)
        xs = np.arange(x0, x1) * pitch
        ys = np.arange(y0, y1) * pitch
        data[y0:y1, x0:x1] += amplitude * np.exp(
            -((xs[None, :] - px) ** 2 + (ys[:, None] - py) ** 2) / (2 * sigma_psf ** 2))
    if noise > 0:
        data = np.clip(data + rng.normal(0.0, noise, data.shape), 0.0, None)
    return PixelImage(data, pitch), design, offsets
