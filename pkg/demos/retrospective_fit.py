"""Fit the five smoothing priors to the synthetic county series and compare
each posterior with the known R_t path.

Run ``python demos/make_sf_shaped.py`` first. Takes a few minutes.

Usage: python demos/retrospective_fit.py [iters]
"""
import csv
import sys
from pathlib import Path

import numpy as np

from rtsmooth.evaluation import RtPosteriorSummary, compute_metrics
from rtsmooth.fit import fit
from rtsmooth.model import ModelSpec
from rtsmooth.sampler import SamplerConfig
from rtsmooth.timeseries import discretize_gamma, read_case_csv

DATA = Path(__file__).resolve().parent / "data"


def main(iters=3000):
    cases = read_case_csv(DATA / "sf_shaped_cases.csv")
    with (DATA / "sf_shaped_truth.csv").open() as fh:
        truth = np.array([float(r["true_rt"]) for r in csv.DictReader(fh)])
    gen = discretize_gamma(4.6, 1.2, kind="generation")
    delay = discretize_gamma(5.5, 2.5)
    cfg = SamplerConfig(chains=4, warmup=iters // 3, iters=iters, seed=1)
    print(f"{'prior':6} {'env95':>6} {'MAD':>6} {'MCIW95':>7} {'R-hat':>6} {'ESS':>6} {'div':>4} {'cpu s':>6}")
    for kind in ("rw1", "ou", "rw2", "ibm", "hsgp"):
        res = fit(ModelSpec(kind, gen, delay), cases, cfg)
        m = compute_metrics(RtPosteriorSummary.from_draws(res.rt_draws), truth)
        rep = res.report
        print(f"{kind:6} {m.envelope_95:6.3f} {m.mad:6.3f} {m.mciw_95:7.3f} {rep.max_rhat:6.3f} "
              f"{rep.min_ess:6.0f} {int(np.max(rep.divergences)):4d} {res.cpu_seconds:6.1f}")


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:2]))
