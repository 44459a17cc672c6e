"""Mean collection efficiency against NV lateral spread inside a pillar.

    python3 scripts/efficiency_vs_spread.py --map sweep.csv --diameter 280

Without ``--map`` the synthetic analytic map is used, which only shows the
shape of the curve; the magnitudes need a real FDTD sweep.
"""
import argparse
from pathlib import Path

import numpy as np

from nvplace.cli import load_efficiency_map
from nvplace.photonics import analytic_map, efficiency_curve
from nvplace.records import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", help="CSV with dr_nm,eta_x,eta_y or dx_nm,dy_nm,eta")
    ap.add_argument("--diameter", type=float, default=280.0)
    ap.add_argument("--out", default="results/efficiency_curve.csv")
    args = ap.parse_args()
    emap = load_efficiency_map(args.map, args.diameter) if args.map else analytic_map(args.diameter)
    sigma0 = np.concatenate([[0.0], np.geomspace(1.0, 10 * args.diameter, 60), [np.inf]])
    rows = efficiency_curve(emap, sigma0)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, ["sigma0_nm", "sigma_loc_pillar_nm", "mean_eta"], rows)
    for s0, sl, e in rows[::10] + [rows[-1]]:
        print(f"sigma0 {s0:9.1f} nm  sigma_loc^pillar {sl:6.1f} nm  mean eta {e:.4f}")


if __name__ == "__main__":
    main()
