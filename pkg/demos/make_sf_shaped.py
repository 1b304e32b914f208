"""Write a synthetic weekly case series shaped like a mid-sized county's
2020-21 winter wave: a slow summer, a December surge and a decline.

The series is drawn from the renewal model itself, so the true R_t path is
known and saved next to the cases.

Usage: python demos/make_sf_shaped.py [output_dir]
"""
import csv
import sys
from datetime import date
from pathlib import Path

import numpy as np

from rtsmooth.renewal import NuisanceParams, simulate_renewal
from rtsmooth.timeseries import CaseSeries, discretize_gamma, write_case_csv

WEEKS = 36
START = date(2020, 6, 14)


def rt_path():
    t = np.arange(WEEKS)
    knots = [(0, 1.1), (6, 0.85), (18, 0.95), (23, 1.35), (27, 1.3), (31, 0.75), (35, 0.8)]
    return np.interp(t, *zip(*knots))


def main(out=Path(__file__).resolve().parent / "data"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gen = discretize_gamma(4.6, 1.2, kind="generation")
    delay = discretize_gamma(5.5, 2.5)
    R = rt_path()
    cases, _ = simulate_renewal(R, gen, delay, NuisanceParams(rho=0.15, kappa=20.0, nu=2.0, lam=800.0),
                                seed=20201214)
    write_case_csv(CaseSeries(cases.counts, START), out / "sf_shaped_cases.csv")
    with (out / "sf_shaped_truth.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["week", "true_rt"])
        w.writerows([t + 1, repr(float(r))] for t, r in enumerate(R))
    return out


if __name__ == "__main__":
    print(main(*sys.argv[1:2]))
