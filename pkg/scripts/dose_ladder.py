"""Mean NV number and sigma_loc against dose for the pillar and mesa presets.

    python3 scripts/dose_ladder.py --trials 20 --doses 8 24 80 --out results/dose_ladder

Writes one CSV per preset (dose_pC, mean_nv, se_nv, sigma_loc_nm). The full
ladder to 2400 pC at full nitrogen density is slow; use --density-scale to
thin the layer for a quick look.
"""
import argparse
import dataclasses
import time
from pathlib import Path

from nvplace.config import load_preset
from nvplace.diffusion import simulate_ensemble
from nvplace.localization import sigma_loc_from_positions
from nvplace.records import write_csv

PRESETS = ("nvcount_280nm_D17", "nvcount_480nm_D17", "nvcount_mesa_D17")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=list(PRESETS))
    ap.add_argument("--doses", nargs="+", type=float, help="pC; default: the preset ladder")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--density-scale", type=float, default=1.0)
    ap.add_argument("--out", default="results/dose_ladder")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for name in args.presets:
        cfg = load_preset(name)
        doses = args.doses or cfg.beam.dose_pC
        rows = []
        for k, dose in enumerate(doses):
            t0 = time.time()
            sc = dataclasses.replace(cfg.scenario_for(dose), density_scale=args.density_scale)
            res = simulate_ensemble(sc, args.trials, [args.seed, k], workers=args.threads)
            pos = res.pooled_nv_positions()
            sig = sigma_loc_from_positions(pos) if len(pos) >= 2 else float("nan")
            rows.append((dose, res.mean_nv, res.se, sig))
            print(f"{name:>16} {dose:7.1f} pC  NV {res.mean_nv:7.2f} +- {res.se:5.2f}  "
                  f"sigma_loc {sig:6.1f} nm  ({time.time() - t0:.1f} s)", flush=True)
        write_csv(out / f"{name}.csv", ["dose_pC", "mean_nv", "se_nv", "sigma_loc_nm"], rows)


if __name__ == "__main__":
    main()
