"""Regenerate the bundled test fixtures in tests/data/.

    python3 scripts/make_fixtures.py [--out tests/data]
"""
import argparse
from pathlib import Path

import numpy as np

from nvplace.estimators import sample_histogram
from nvplace.localization import synthetic_spot_array
from nvplace.photonics import analytic_map
from nvplace.records import write_csv, write_json

MESA = dict(n_cols=18, n_rows=9, spacing=2000.0, pitch=40.0, sigma_psf=235.0,
            sigma_loc=102.0, sigma_sys=41.0, seed=7)
LAMBDA_FIXTURE = 2.0
HIST_SEED = 11


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "tests" / "data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    image, design, _ = synthetic_spot_array(**MESA)
    image.save(out / "mesa_image.txt.gz", fmt="%.5g")
    write_csv(out / "mesa_targets.csv", ["x_nm", "y_nm"], design)
    write_json(out / "mesa_image_params.json", MESA)

    hist = sample_histogram(LAMBDA_FIXTURE, 121, np.random.default_rng(HIST_SEED))
    write_csv(out / "orientation_hist_lambda2.csv", ["l", "count"], enumerate(hist.counts))

    emap = analytic_map(280.0)
    write_csv(out / "effmap_analytic_280nm.csv", ["dr_nm", "eta_x", "eta_y"],
              zip(emap.dr, emap.eta_x, emap.eta_y))
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
