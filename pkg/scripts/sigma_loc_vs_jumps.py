"""sigma_loc against total jump count for the three geometries, and the D that matches a target.

    python3 scripts/sigma_loc_vs_jumps.py --target 102 --trials 5 --out results/sigma_loc

The mesa curve is inverted at ``--target`` (nm) to give the jump count and
D = a^2 N / (6 t) on the 2 nm lattice.
"""
import argparse
import json
from pathlib import Path

from nvplace.config import load_preset
from nvplace.localization import invert_diffusion_constant, sigma_loc_curve
from nvplace.records import write_csv

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", type=float, default=102.0)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--n-min", type=float, default=2e3)
    ap.add_argument("--n-max", type=float, default=5e4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="results/sigma_loc")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.unique(np.round(np.geomspace(args.n_min, args.n_max, args.points)).astype(int))

    for name in ("sigma_loc_280nm_D21", "sigma_loc_480nm_D21"):
        cfg = load_preset(name)
        sig, n_nv = sigma_loc_curve(cfg.scenario_for(cfg.beam.dose_pC[0]), grid, args.trials, args.seed)
        write_csv(out / f"{name}.csv", ["n_jumps", "sigma_loc_nm", "n_nv"], zip(grid, sig, n_nv))
        print(name, np.round(sig, 1), flush=True)

    cfg = load_preset("sigma_loc_mesa_D21")
    inv = invert_diffusion_constant(args.target, cfg.scenario_for(cfg.beam.dose_pC[0]),
                                    n_min=args.n_min, n_max=args.n_max, n_points=args.points,
                                    n_trials=args.trials, seed=args.seed)
    write_csv(out / "sigma_loc_mesa_D21.csv", ["n_jumps", "sigma_loc_nm", "n_nv"],
              zip(inv.grid, inv.sigma_loc, inv.n_nv))
    (out / "inversion.json").write_text(json.dumps(inv.to_dict(), indent=2, default=float) + "\n")
    print(f"mesa: sigma_loc {args.target} nm -> N = {inv.n_jumps:.0f}, "
          f"D = {inv.diffusion_constant:.2f} nm^2/s")


if __name__ == "__main__":
    main()
