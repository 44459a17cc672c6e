"""Ratio of mean NV number in 480 nm and 280 nm pillars against D_V.

    python3 scripts/pillar_ratio_vs_d.py --trials 100 --dose 24 --out results/pillar_ratio

Faster diffusion lets more vacancies reach the sidewalls of the narrow
pillar, so the 480/280 ratio should grow with D_V. Writes pillar_ratio.csv
(D_nm2_per_s, mean_nv_480, se_480, mean_nv_280, se_280, ratio, ratio_se).
"""
import argparse
import math
import time
from pathlib import Path

import numpy as np

from nvplace.config import load_preset
from nvplace.diffusion import simulate_ensemble
from nvplace.records import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d-values", nargs="+", type=float, default=[4.0, 10.0, 17.0, 25.0, 40.0],
                    help="nm^2/s")
    ap.add_argument("--dose", type=float, default=24.0, help="pC")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/pillar_ratio")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    wide = load_preset("nvcount_480nm_D17").scenario_for(args.dose)
    narrow = load_preset("nvcount_280nm_D17").scenario_for(args.dose)
    rows = []
    for k, d in enumerate(args.d_values):
        t0 = time.time()
        r480 = simulate_ensemble(wide.with_lattice(diffusion_constant=d), args.trials,
                                 [args.seed, k, 0], workers=args.threads)
        r280 = simulate_ensemble(narrow.with_lattice(diffusion_constant=d), args.trials,
                                 [args.seed, k, 1], workers=args.threads)
        ratio = r480.mean_nv / r280.mean_nv if r280.mean_nv > 0 else math.nan
        # delta-method error of a ratio of independent means
        ratio_se = ratio * np.hypot(r480.se / r480.mean_nv, r280.se / r280.mean_nv) \
            if r480.mean_nv > 0 and r280.mean_nv > 0 else math.nan
        rows.append((d, r480.mean_nv, r480.se, r280.mean_nv, r280.se, ratio, float(ratio_se)))
        print(f"D {d:5.1f} nm^2/s  480 {r480.mean_nv:6.2f}  280 {r280.mean_nv:6.2f}  "
              f"ratio {ratio:5.2f} +- {ratio_se:4.2f}  ({time.time() - t0:.1f} s)", flush=True)
    write_csv(out / "pillar_ratio.csv",
              ["D_nm2_per_s", "mean_nv_480", "se_480", "mean_nv_280", "se_280", "ratio", "ratio_se"],
              rows)


if __name__ == "__main__":
    main()
