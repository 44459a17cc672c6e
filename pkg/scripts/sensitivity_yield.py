"""Sensitivity CDF and yield for the measured T2 / contrast / PL_sat summaries.

    python3 scripts/sensitivity_yield.py --samples 1000000 --out results/sensitivity
"""
import argparse
import json
from pathlib import Path

from nvplace.records import write_csv
from nvplace.sensitivity import (YIELD_THRESHOLD, SensorParams, eta, reference_distributions,
                                 sample_yield, single_spin_averaging_time)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/sensitivity")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dist, y = sample_yield(reference_distributions(), args.samples, seed=args.seed)
    xs, cdf = dist.cdf_table(n_points=501)
    write_csv(out / "cdf.csv", ["eta_T_per_sqrtHz", "cdf"], zip(xs, cdf))
    typical = eta(SensorParams(98.0, 0.18, 1.056e6))
    summary = {"median_nT": dist.median * 1e9, "yield_below_68nT": y,
               "eta_at_means_nT": typical * 1e9,
               "single_spin_time_at_68nT_s": single_spin_averaging_time(YIELD_THRESHOLD)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, v in summary.items():
        print(f"{k:>28}: {v:.4g}")


if __name__ == "__main__":
    main()
