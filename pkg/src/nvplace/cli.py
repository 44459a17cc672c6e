"""nvplace command line.

Subcommands: simulate, mle-fit, localize, sensitivity, effmap.

Seed derivation: dose ``k`` of a simulate run uses ``SeedSequence([seed, k])``;
its trial ``i`` takes the ``i``-th spawned child, which in turn spawns the
nitrogen (one child per layer), vacancy and walk streams. Other subcommands
seed from ``SeedSequence(seed)`` directly. Worker threads only change who
runs a trial, never which stream it gets.

Exit codes: 0 success, 2 config or input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, apply_overrides, config_hash, dump_config,
                     load_config, load_preset, preset_names)
from .diffusion import diffusion_constant_from_jumps, simulate_ensemble
from .estimators import (N_ORIENTATIONS, OrientationHistogram, fit_lambda, model_pmf,
                         subtract_control, systematic_uncertainty)
from .localization import (FitError, PixelImage, UnresolvableError, decompose_sigma,
                           fit_affine, fit_gaussian2d, find_peaks, invert_diffusion_constant,
                           match_points, radial_profile, sigma_loc_from_positions, tile_average)
from .photonics import EfficiencyMap, analytic_map, efficiency_curve
from .records import InputError, read_csv, utc_now, write_csv, write_json, write_manifest
from .sensitivity import (Empirical, TruncNormal, sample_yield, single_spin_averaging_time)

log = logging.getLogger("nvplace")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def resolve_config(args):
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        cfg = RunConfig()
    cfg = apply_overrides(cfg, master_seed=args.seed, trials=args.trials,
                          threads=args.threads, output_dir=args.out)
    if cfg.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {cfg.trials}")
    if cfg.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
    return cfg


class Run:
    """Output directory bookkeeping for one subcommand."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = utc_now()
        self.outputs = []
        self.inputs = []

    def csv(self, name, header, rows):
        self.outputs.append(write_csv(self.out / name, header, rows))

    def json(self, name, payload):
        self.outputs.append(write_json(self.out / name, payload))

    def finish(self):
        cfg_path = self.out / "config.yaml"
        cfg_path.write_text(dump_config(self.cfg))
        self.outputs.append(cfg_path)
        write_manifest(self.out, self.command, config_hash(self.cfg), self.cfg.master_seed,
                       self.started, self.outputs, self.inputs)
        log.info("wrote %d files to %s", len(self.outputs) + 1, self.out)


def _numeric(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (FitError, UnresolvableError, ValueError, FloatingPointError) as exc:
        raise NumericFailure(str(exc)) from exc


# ---------------------------------------------------------------- simulate

def cmd_simulate(args, cfg):
    run = Run("simulate", cfg)
    ladder = []
    for k, dose in enumerate(cfg.beam.dose_pC):
        scenario = cfg.scenario_for(dose)
        res = simulate_ensemble(scenario, cfg.trials, [cfg.master_seed, k], workers=cfg.threads)
        rows = []
        for tid, o in enumerate(res.outcomes):
            for p, orient, step in zip(o.nv_positions, o.nv_orientations, o.nv_capture_steps):
                rows.append((tid, p[0], p[1], p[2], int(orient), int(step)))
        run.csv(f"nv_records_{dose:g}pC.csv",
                ["trial_id", "nv_x", "nv_y", "nv_z", "orientation", "capture_step"], rows)
        pos = res.pooled_nv_positions()
        sigma = sigma_loc_from_positions(pos, scenario.target[:2]) if len(pos) >= 2 else None
        entry = {
            "dose_pC": dose,
            "trials": cfg.trials,
            "mean_nv": res.mean_nv,
            "se_nv": res.se,
            "nv_counts": res.nv_counts.tolist(),
            "sigma_loc_nm": sigma,
            "mean_vacancies": float(np.mean([o.n_initial_vacancies for o in res.outcomes])),
            "mean_absorbed": float(np.mean([o.n_absorbed_boundary for o in res.outcomes])),
            "mean_surviving": float(np.mean([o.n_surviving for o in res.outcomes])),
        }
        ladder.append(entry)
        log.info("dose %g pC: mean NV %.3f +- %.3f", dose, res.mean_nv, res.se)
    run.csv("dose_ladder.csv", ["dose_pC", "mean_nv", "se_nv", "sigma_loc_nm"],
            [(e["dose_pC"], e["mean_nv"], e["se_nv"],
              float("nan") if e["sigma_loc_nm"] is None else e["sigma_loc_nm"]) for e in ladder])
    run.json("summary.json", {"scenario": cfg.scenario, "doses": ladder})
    run.finish()


# ---------------------------------------------------------------- mle-fit

def read_histogram(path):
    cols = read_csv(path, required=["l", "count"])
    hist = np.zeros(N_ORIENTATIONS + 1, dtype=np.int64)
    for l, c in zip(cols["l"], cols["count"]):
        if l != int(l) or not 0 <= l <= N_ORIENTATIONS or c != int(c) or c < 0:
            raise InputError(f"{path}: bad row l={l}, count={c}")
        hist[int(l)] += int(c)
    try:
        return OrientationHistogram(hist)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_mle_fit(args, cfg):
    hist = read_histogram(args.histogram)
    control = read_histogram(args.control) if args.control else None
    run = Run("mle-fit", cfg)
    run.inputs += [args.histogram] + ([args.control] if args.control else [])
    est = cfg.estimator
    res = _numeric(fit_lambda, hist, lambda_max=est.lambda_max)
    if est.systematic_sets > 0:
        res.systematic_sigma = systematic_uncertainty(
            res.lambda_hat, est.systematic_sets, hist.n_sites, seed=cfg.master_seed)
    payload = {"n_sites": hist.n_sites, "counts": hist.counts.tolist(), **res.to_dict()}
    if control is not None:
        ctrl = _numeric(fit_lambda, control, lambda_max=est.lambda_max)
        payload["control"] = ctrl.to_dict()
        payload["net"] = subtract_control(res, ctrl)
    run.json("mle.json", payload)
    expected = model_pmf(res.lambda_hat) * hist.n_sites
    run.csv("orientation_histogram.csv", ["l", "observed", "expected"],
            [(l, int(hist.counts[l]), expected[l]) for l in range(N_ORIENTATIONS + 1)])
    run.finish()
    log.info("lambda = %.4f, 95%% CI [%.4f, %.4f]", res.lambda_hat, *res.ci95)


# ---------------------------------------------------------------- localize

def _load_image(path):
    try:
        return PixelImage.load(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: unreadable image ({exc})") from exc


def _localize_image(args, cfg, run):
    loc = cfg.localize
    image = _load_image(args.image)
    run.inputs.append(args.image)
    payload = {}
    if args.targets:
        cols = read_csv(args.targets, required=["x_nm", "y_nm"])
        run.inputs.append(args.targets)
        design = np.column_stack([cols["x_nm"], cols["y_nm"]])
        targets = design
        if args.register:
            peaks = find_peaks(image, loc.peak_min_distance_nm)
            det, des = match_points(peaks, design, 0.5 * loc.peak_min_distance_nm)
            transform, rmse = _numeric(fit_affine, des, det)
            targets = transform.apply(design)
            payload["registration"] = {"n_matched": len(det), "rmse_nm": rmse}
        tiles = _numeric(tile_average, image, targets, loc.tile_size_nm)
        spot = tiles.image
        payload["tiles"] = {"used": tiles.n_used, "skipped": tiles.n_skipped}
    else:
        spot = image
    fit = _numeric(fit_gaussian2d, spot)
    budget = _numeric(decompose_sigma, fit.sigma_tot, loc.sigma_psf_nm, loc.sigma_sys_nm,
                      (fit.sigma_tot_err, loc.sigma_psf_err_nm, loc.sigma_sys_err_nm))
    r, mean, se = radial_profile(spot, (fit.x0, fit.y0), loc.radial_bin_nm)
    run.csv("radial_profile.csv", ["r_nm", "mean_PL", "se"], zip(r, mean, se))
    payload.update(budget=budget.to_dict(), gaussian_fit=fit.to_dict())
    return budget.sigma_loc, payload


def _localize_positions(args, cfg, run):
    loc = cfg.localize
    cols = read_csv(args.positions)
    x = cols.get("nv_x", cols.get("x_nm"))
    y = cols.get("nv_y", cols.get("y_nm"))
    if x is None or y is None:
        raise InputError(f"{args.positions}: need columns nv_x,nv_y or x_nm,y_nm")
    run.inputs.append(args.positions)
    pos = np.column_stack([x, y])
    target = (cfg.beam.target_x_nm, cfg.beam.target_y_nm)
    sigma = _numeric(sigma_loc_from_positions, pos, target)
    tot = float(np.sqrt(sigma ** 2 + loc.sigma_psf_nm ** 2 + loc.sigma_sys_nm ** 2))
    budget = decompose_sigma(tot, loc.sigma_psf_nm, loc.sigma_sys_nm)
    # radial number density of positions about the target
    r = np.hypot(pos[:, 0] - target[0], pos[:, 1] - target[1])
    nb = int(r.max() // loc.radial_bin_nm) + 1
    counts = np.bincount((r // loc.radial_bin_nm).astype(int), minlength=nb)
    edges = np.arange(nb + 1) * loc.radial_bin_nm
    area = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    centers = 0.5 * (edges[1:] + edges[:-1])
    run.csv("radial_profile.csv", ["r_nm", "density_per_nm2", "se"],
            zip(centers, counts / area / len(pos), np.sqrt(counts) / area / len(pos)))
    return sigma, {"budget": budget.to_dict(), "n_positions": len(pos)}


def cmd_localize(args, cfg):
    if bool(args.image) == bool(args.positions):
        raise InputError("localize needs exactly one of --image or --positions")
    run = Run("localize", cfg)
    if args.image:
        sigma_loc, payload = _localize_image(args, cfg, run)
    else:
        sigma_loc, payload = _localize_positions(args, cfg, run)
    run.json("variance_budget.json", payload)
    if args.invert_D:
        lt = cfg.lattice
        a = args.cell_size_nm if args.cell_size_nm is not None else lt.cell_size_nm
        t = args.anneal_time_s if args.anneal_time_s is not None else lt.anneal_time_s
        if args.n_jumps is not None:
            d = diffusion_constant_from_jumps(args.n_jumps, a, t)
            run.json("invert_D.json", {"n_jumps": args.n_jumps, "cell_size_nm": a,
                                       "anneal_time_s": t, "D_nm2_per_s": d})
        else:
            target = args.sigma_loc_nm if args.sigma_loc_nm is not None else sigma_loc
            loc = cfg.localize
            inv = _numeric(invert_diffusion_constant, target, cfg.scenario_for(cfg.beam.dose_pC[0]),
                           a=a, t_anneal=t, n_min=loc.invert_n_min, n_max=loc.invert_n_max,
                           n_points=loc.invert_points, n_trials=loc.invert_trials,
                           seed=cfg.master_seed, workers=cfg.threads)
            run.json("invert_D.json", {"sigma_loc_target_nm": target, **inv.to_dict()})
            run.csv("sigma_loc_curve.csv", ["n_jumps", "sigma_loc_nm", "n_nv"],
                    zip(inv.grid, inv.sigma_loc, inv.n_nv))
            d = inv.diffusion_constant
        log.info("D = %.4g nm^2/s", d)
    run.finish()
    log.info("sigma_loc = %.2f nm", sigma_loc)


# ---------------------------------------------------------------- sensitivity

def _samples(path, column=None):
    cols = read_csv(path)
    if column is None:
        if len(cols) != 1:
            raise InputError(f"{path}: expected a single column, found {list(cols)}")
        return next(iter(cols.values()))
    return cols[column]


def build_distributions(sec):
    def pick(csv_path, mean, sd, lower, upper=np.inf):
        if csv_path:
            return Empirical(tuple(_samples(csv_path)))
        return TruncNormal(mean, sd, lower, upper)

    try:
        return {
            "t2_us": pick(sec.t2_samples_csv, sec.t2_mean_us, sec.t2_sd_us, 0.0),
            "contrast": pick(sec.contrast_samples_csv, sec.contrast_mean, sec.contrast_sd, 0.0, 1.0),
            "pl_sat_cps": pick(sec.pl_sat_samples_csv, sec.pl_sat_mean_cps, sec.pl_sat_sd_cps, 0.0),
        }
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise ConfigError(f"sensitivity distribution: {exc}") from exc


def cmd_sensitivity(args, cfg):
    sec = cfg.sensitivity
    dists = build_distributions(sec)
    joint = None
    if sec.joint_samples_csv:
        cols = read_csv(sec.joint_samples_csv, required=["t2_us", "contrast", "pl_sat_cps"])
        joint = np.column_stack([cols["t2_us"], cols["contrast"], cols["pl_sat_cps"]])
    run = Run("sensitivity", cfg)
    run.inputs += [p for p in (sec.t2_samples_csv, sec.contrast_samples_csv,
                               sec.pl_sat_samples_csv, sec.joint_samples_csv) if p]
    threshold = sec.threshold_nT_per_sqrtHz * 1e-9
    dist, yield_fraction = _numeric(sample_yield, dists, sec.n_samples, threshold,
                                    seed=cfg.master_seed, readout_window_ns=sec.readout_window_ns,
                                    bins=sec.histogram_bins, joint=joint, workers=cfg.threads)
    run.csv("sensitivity_histogram.csv",
            ["eta_lo_T_per_sqrtHz", "eta_hi_T_per_sqrtHz", "count"],
            zip(dist.edges[:-1], dist.edges[1:], dist.counts))
    xs, cdf = dist.cdf_table(n_points=1001)
    run.csv("sensitivity_cdf.csv", ["eta_T_per_sqrtHz", "cdf"], zip(xs, cdf))
    median = dist.median
    run.json("yield.json", {
        "n_samples": sec.n_samples,
        "threshold_T_per_sqrtHz": threshold,
        "yield_fraction": yield_fraction,
        "median_T_per_sqrtHz": median,
        "quantiles_T_per_sqrtHz": {str(q): float(dist.quantile(q)) for q in (0.1, 0.25, 0.75, 0.9)},
        "single_spin_time_at_threshold_s": single_spin_averaging_time(
            threshold, sec.nv_depth_nm, sec.dipole_kappa),
        "single_spin_time_at_median_s": single_spin_averaging_time(
            median, sec.nv_depth_nm, sec.dipole_kappa),
    })
    run.finish()
    log.info("median eta %.2f nT/sqrt(Hz), yield %.3f", median * 1e9, yield_fraction)


# ---------------------------------------------------------------- effmap

def load_efficiency_map(path, pillar_diameter):
    cols = read_csv(path)
    try:
        if {"dr_nm", "eta_x", "eta_y"} <= cols.keys():
            return EfficiencyMap(pillar_diameter, cols["dr_nm"], cols["eta_x"], cols["eta_y"])
        if {"dx_nm", "dy_nm", "eta"} <= cols.keys():
            gx, gy = np.unique(cols["dx_nm"]), np.unique(cols["dy_nm"])
            if len(gx) * len(gy) != len(cols["eta"]):
                raise InputError(f"{path}: grid is not a full rectangle")
            grid = np.full((len(gy), len(gx)), np.nan)
            grid[np.searchsorted(gy, cols["dy_nm"]), np.searchsorted(gx, cols["dx_nm"])] = cols["eta"]
            return EfficiencyMap(pillar_diameter, grid_x=gx, grid_y=gy, grid_eta=grid)
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    raise InputError(f"{path}: need columns dr_nm,eta_x,eta_y or dx_nm,dy_nm,eta")


def cmd_effmap(args, cfg):
    sec = cfg.effmap
    path = args.map or sec.map_csv
    if path:
        emap = load_efficiency_map(path, sec.pillar_diameter_nm)
    else:
        log.warning("no efficiency map given; using the synthetic analytic map")
        emap = analytic_map(sec.pillar_diameter_nm)
    run = Run("effmap", cfg)
    if path:
        run.inputs.append(path)
    rows = _numeric(efficiency_curve, emap, sec.sigma0_nm,
                    n_r=sec.radial_nodes, n_theta=sec.angular_nodes)
    run.csv("efficiency_curve.csv", ["sigma0_nm", "sigma_loc_pillar_nm", "mean_eta"], rows)
    run.json("effmap.json", {"map": str(path) if path else "analytic",
                             "pillar_diameter_nm": sec.pillar_diameter_nm,
                             "on_axis_eta": emap.on_axis()})
    run.finish()


# ---------------------------------------------------------------- parser

COMMANDS = {
    "simulate": cmd_simulate,
    "mle-fit": cmd_mle_fit,
    "localize": cmd_localize,
    "sensitivity": cmd_sensitivity,
    "effmap": cmd_effmap,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--preset", help=f"bundled configuration ({', '.join(preset_names())})")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--trials", type=int, help="trials per dose (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nvplace", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nvplace {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="Monte-Carlo irradiation and anneal")

    m = sub.add_parser("mle-fit", parents=[common], help="mean NV number from orientation counts")
    m.add_argument("histogram", help="CSV with columns l,count")
    m.add_argument("--control", help="as-grown control histogram to subtract")

    lz = sub.add_parser("localize", parents=[common], help="sigma_loc from an image or positions")
    lz.add_argument("--image", help="pixel image file (see PixelImage.save)")
    lz.add_argument("--targets", help="CSV of design spot positions x_nm,y_nm")
    lz.add_argument("--register", action="store_true",
                    help="affine-register design positions onto detected peaks first")
    lz.add_argument("--positions", help="CSV of NV positions (nv_x,nv_y or x_nm,y_nm)")
    lz.add_argument("--invert-D", action="store_true", help="also infer the diffusion constant")
    lz.add_argument("--n-jumps", type=float, help="skip simulation: D from this jump count")
    lz.add_argument("--cell-size-nm", type=float)
    lz.add_argument("--anneal-time-s", type=float)
    lz.add_argument("--sigma-loc-nm", type=float, help="inversion target instead of the measured value")

    sub.add_parser("sensitivity", parents=[common], help="sensitivity distribution and yield")

    e = sub.add_parser("effmap", parents=[common], help="mean collection efficiency vs spread")
    e.add_argument("--map", help="efficiency map CSV (overrides config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
