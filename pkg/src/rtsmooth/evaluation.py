"""
Benchmark metrics and protocols.

Retrospective metrics (MAD, envelope, mean credible interval width), the
real-time decision score, the week-by-week refitting protocol and the
replicated SEIRS benchmark.
"""
from __future__ import annotations

import csv
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import AlignmentError, InvalidParameterError, RtSmoothError
from .fit import SUMMARY_LEVELS, fit
from .model import ModelSpec
from .sampler import SamplerConfig
from .seirs import DEFAULT_DT, OutbreakTruth, SeirsParams, observe_cases, simulate_seirs
from .timeseries import CaseSeries, quantiles_along

METRIC_NAMES = ("envelope_95", "envelope_80", "mad", "mciw_95", "mciw_80")
INTERVALS = {95: (0.025, 0.975), 80: (0.1, 0.9)}


@dataclass(frozen=True)
class RtPosteriorSummary:
    """Weekly posterior quantiles of R_t.

    ``quantiles`` has one row per week and one column per entry of ``levels``.
    """

    quantiles: np.ndarray
    levels: tuple = SUMMARY_LEVELS

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.quantiles, float))
        levels = tuple(float(v) for v in self.levels)
        if q.shape[1] != len(levels):
            raise InvalidParameterError("need one quantile column per level")
        if list(levels) != sorted(levels):
            raise InvalidParameterError("levels must be increasing")
        if np.any(np.diff(q, axis=1) < 0):
            raise InvalidParameterError("quantiles must be non-decreasing in level")
        if not np.all(q > 0):
            raise InvalidParameterError("R_t quantiles must be positive")
        q.setflags(write=False)
        object.__setattr__(self, "quantiles", q)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_draws(cls, rt_draws, levels=SUMMARY_LEVELS) -> "RtPosteriorSummary":
        """Summarize draws of shape (n_draws, T)."""
        q = quantiles_along(np.asarray(rt_draws, float), levels, axis=0).T
        return cls(q, tuple(levels))

    @property
    def T(self) -> int:
        return self.quantiles.shape[0]

    def quantile(self, level) -> np.ndarray:
        for i, v in enumerate(self.levels):
            if math.isclose(v, level):
                return self.quantiles[:, i]
        raise InvalidParameterError(f"level {level} is not summarized; have {self.levels}")

    @property
    def median(self) -> np.ndarray:
        return self.quantile(0.5)

    def interval(self, width) -> tuple:
        lo, hi = INTERVALS[int(width)]
        return self.quantile(lo), self.quantile(hi)

    def last(self) -> "RtPosteriorSummary":
        return RtPosteriorSummary(self.quantiles[-1:], self.levels)


@dataclass
class MetricReport:
    mad: float
    envelope_95: float
    envelope_80: float
    mciw_95: float
    mciw_80: float
    decision_score_95: float | None = None
    decision_score_80: float | None = None
    cpu_minutes: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def envelope(truth, lower, upper) -> float:
    """Fraction of weeks with the truth strictly inside (lower, upper)."""
    inside = sum(1 for r, lo, hi in zip(truth, lower, upper) if lo < r < hi)
    return inside / len(truth)


def compute_metrics(summary: RtPosteriorSummary, truth) -> MetricReport:
    """MAD of the posterior median, and envelope and mean width of the 95% and 80% intervals.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    summation order.
    """
    truth = np.asarray(truth, float).ravel()
    if truth.size != summary.T:
        raise AlignmentError(f"summary covers {summary.T} weeks but truth has {truth.size}")
    if truth.size == 0:
        raise AlignmentError("no weeks to evaluate")
    med = summary.median
    out = {"mad": _mean(abs(float(m) - float(r)) for m, r in zip(med, truth))}
    for width in (95, 80):
        lo, hi = summary.interval(width)
        out[f"envelope_{width}"] = envelope(truth, lo, hi)
        out[f"mciw_{width}"] = _mean(float(h) - float(l) for l, h in zip(lo, hi))
    return MetricReport(**out)


def decision_score(last_week_quantiles, truth_last_weeks, level=95) -> float:
    """Fraction of real-time iterations whose interval sits on the correct side of 1.

    Parameters
    ----------
    last_week_quantiles : sequence of (lower, upper)
        One credible interval per iteration.
    truth_last_weeks : sequence of float
        True R_t of each iteration's last week.
    level : int
        Informational only; the interval bounds are given explicitly.

    Notes
    -----
    An interval straddling 1 never counts as correct. The denominator is the
    number of iterations evaluated.
    """
    pairs = [tuple(map(float, q)) for q in last_week_quantiles]
    truth = [float(r) for r in truth_last_weeks]
    if len(pairs) != len(truth):
        raise AlignmentError(f"{len(pairs)} intervals but {len(truth)} truth values")
    if not pairs:
        raise AlignmentError("no iterations to score")
    correct = sum(1 for (lo, hi), r in zip(pairs, truth)
                  if (lo > 1.0 and r > 1.0) or (hi < 1.0 and r < 1.0))
    return correct / len(pairs)


# ---------------------------------------------------------------- protocols


def _stream_seed(master, *key) -> int:
    """A 32-bit integer seed for the named sub-stream ``key`` of ``master``."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1)[0])


STREAM_SIMULATE, STREAM_OBSERVE, STREAM_FIT, STREAM_REALTIME = 0, 1, 2, 3


def _run_fit(task):
    spec, cases, cfg = task
    t0 = time.process_time()
    try:
        res = fit(spec, cases, cfg)
    except RtSmoothError as exc:
        return {"status": "failed", "reason": f"{type(exc).__name__}: {exc}",
                "cpu_seconds": time.process_time() - t0}
    except Exception as exc:  # recorded rather than aborting the whole benchmark
        return {"status": "failed", "reason": "".join(traceback.format_exception_only(type(exc), exc)).strip(),
                "cpu_seconds": time.process_time() - t0}
    rep = res.report
    return {
        "status": "ok",
        "summary": RtPosteriorSummary.from_draws(res.rt_draws),
        "cpu_seconds": res.cpu_seconds,
        "diagnostics": rep.to_dict(),
        "diagnostics_ok": rep.passed,
    }


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass
class RealtimeRecord:
    T_prime: int
    quantiles: np.ndarray  # R_{T'} at SUMMARY_LEVELS
    true_rt: float
    status: str = "ok"
    diagnostics_ok: bool = True
    reason: str = ""
    cpu_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def q(self, level) -> float:
        return float(self.quantiles[SUMMARY_LEVELS.index(level)])


def realtime_protocol(dataset: OutbreakTruth, spec: ModelSpec, start_weeks=10, config=None,
                      seed=0, stop_weeks=None, jobs=1) -> list:
    """Refit on cases[1..T'] for T' = start_weeks..stop_weeks, keeping only R_{T'}.

    Parameters
    ----------
    dataset : OutbreakTruth
        Must carry observed cases.
    spec : ModelSpec
    start_weeks : int
        First truncation length.
    config : SamplerConfig, optional
        Its seed is replaced by a per-iteration stream derived from ``seed``.
    stop_weeks : int, optional
        Last truncation length; defaults to the dataset horizon.
    """
    if dataset.cases is None:
        raise InvalidParameterError("the dataset has no observed cases")
    horizon = dataset.horizon
    stop = horizon if stop_weeks is None else int(stop_weeks)
    if not 2 <= start_weeks <= stop <= horizon:
        raise InvalidParameterError(
            f"need 2 <= start_weeks ({start_weeks}) <= stop ({stop}) <= horizon ({horizon})")
    cfg = config or SamplerConfig()
    tasks = []
    weeks = list(range(int(start_weeks), stop + 1))
    for Tp in weeks:
        c = SamplerConfig(**{**cfg.to_config(), "seed": _stream_seed(seed, STREAM_REALTIME, Tp), "jobs": 1})
        tasks.append((spec, dataset.cases.truncate(Tp), c))
    results = _map(_run_fit, tasks, jobs)
    records = []
    for Tp, res in zip(weeks, results):
        truth = float(dataset.true_rt[Tp - 1])
        if res["status"] != "ok":
            records.append(RealtimeRecord(Tp, np.full(len(SUMMARY_LEVELS), np.nan), truth, "failed",
                                          False, res["reason"], res["cpu_seconds"]))
            continue
        records.append(RealtimeRecord(Tp, res["summary"].quantiles[-1].copy(), truth, "ok",
                                      res["diagnostics_ok"], "", res["cpu_seconds"], res["diagnostics"]))
    return records


def realtime_scores(records) -> dict:
    """Decision scores, real-time coverage and mean interval widths over successful iterations."""
    ok = [r for r in records if r.status == "ok"]
    out = {"iterations": len(records), "failed": len(records) - len(ok)}
    if not ok:
        return out
    truth = [r.true_rt for r in ok]
    for width, (lo, hi) in INTERVALS.items():
        pairs = [(r.q(lo), r.q(hi)) for r in ok]
        out[f"decision_score_{width}"] = decision_score(pairs, truth, width)
        out[f"coverage_{width}"] = envelope(truth, [p[0] for p in pairs], [p[1] for p in pairs])
        out[f"mean_width_{width}"] = _mean(h - l for l, h in pairs)
    return out


def write_realtime_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_prime", "median", "q10", "q90", "q025", "q975", "true_rt"])
        for r in records:
            w.writerow([r.T_prime] + [repr(r.q(v)) for v in (0.5, 0.1, 0.9, 0.025, 0.975)]
                       + [repr(r.true_rt)])


@dataclass
class ReplicateResult:
    replicate: int
    prior: str
    status: str
    metrics: MetricReport | None
    cpu_minutes: float
    diagnostics_ok: bool
    diagnostics: dict
    reason: str = ""


@dataclass
class BenchmarkResult:
    rows: list
    summary: dict  # prior -> {metric: (mean, sd)}, plus counts
    seeds: dict


def aggregate(rows) -> dict:
    """Per-prior mean and sample SD of every metric over successful replicates."""
    out = {}
    for prior in dict.fromkeys(r.prior for r in rows):
        ok = [r for r in rows if r.prior == prior and r.status == "ok"]
        entry = {"n_ok": len(ok), "n_failed": sum(1 for r in rows if r.prior == prior) - len(ok),
                 "n_diagnostics_failed": sum(1 for r in ok if not r.diagnostics_ok)}
        for name in METRIC_NAMES + ("cpu_minutes",):
            vals = [getattr(r.metrics, name) if name != "cpu_minutes" else r.cpu_minutes for r in ok]
            if not vals:
                entry[name] = (float("nan"), float("nan"))
                continue
            mean = _mean(vals)
            sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else float("nan")
            entry[name] = (mean, sd)
        entry["cpu_min"] = min((r.cpu_minutes for r in ok), default=float("nan"))
        entry["cpu_max"] = max((r.cpu_minutes for r in ok), default=float("nan"))
        out[prior] = entry
    return out


def simulate_replicate(scenario: SeirsParams, replicate, seed, rho=0.05, kappa=5.0, dt=DEFAULT_DT):
    """Simulate one benchmark outbreak with its named random streams."""
    truth = simulate_seirs(scenario, seed=_stream_seed(seed, STREAM_SIMULATE, replicate), dt=dt)
    cases = observe_cases(truth, rho, kappa, seed=_stream_seed(seed, STREAM_OBSERVE, replicate))
    return truth.with_cases(cases)


def batch_benchmark(n_replicates, scenario: SeirsParams, specs: dict, seed, config=None,
                    rho=0.05, kappa=5.0, dt=DEFAULT_DT, jobs=1) -> BenchmarkResult:
    """Fit every model in ``specs`` to ``n_replicates`` simulated outbreaks.

    Parameters
    ----------
    specs : dict
        Label (usually the prior name) to ModelSpec.
    seed : int
        Master seed; simulation, observation and fit streams derive from it.
    """
    if n_replicates < 2:
        raise InvalidParameterError("n_replicates must be at least 2")
    cfg = config or SamplerConfig()
    labels = list(specs)
    truths = [simulate_replicate(scenario, r, seed, rho, kappa, dt) for r in range(n_replicates)]
    tasks, keys = [], []
    for r, truth in enumerate(truths):
        for j, label in enumerate(labels):
            fit_seed = _stream_seed(seed, STREAM_FIT, r, j)
            c = SamplerConfig(**{**cfg.to_config(), "seed": fit_seed, "jobs": 1})
            tasks.append((specs[label], truth.cases, c))
            keys.append((r, label, fit_seed))
    results = _map(_run_fit, tasks, jobs)
    rows = []
    for (r, label, _), res in zip(keys, results):
        cpu = res["cpu_seconds"] / 60.0
        if res["status"] != "ok":
            rows.append(ReplicateResult(r, label, "failed", None, cpu, False, {}, res["reason"]))
            continue
        m = compute_metrics(res["summary"], truths[r].true_rt)
        m.cpu_minutes = cpu
        rows.append(ReplicateResult(r, label, "ok", m, cpu, res["diagnostics_ok"], res["diagnostics"]))
    seeds = {"master": int(seed), "fits": {f"{r}:{label}": s for r, label, s in keys}}
    return BenchmarkResult(rows, aggregate(rows), seeds)


def write_metrics_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "prior", "status", *METRIC_NAMES, "cpu_minutes", "max_rhat",
                    "min_ess", "divergences", "diagnostics_ok", "reason"])
        for r in rows:
            vals = [repr(getattr(r.metrics, n)) for n in METRIC_NAMES] if r.metrics else [""] * 5
            d = r.diagnostics
            w.writerow([r.replicate, r.prior, r.status, *vals, repr(r.cpu_minutes),
                        d.get("max_rhat", ""), d.get("min_ess", ""), sum(d.get("divergences", [])),
                        int(r.diagnostics_ok), r.reason])


def write_summary_csv(summary: dict, path) -> None:
    """One row per prior: mean and SD of each metric, as in a Table 1 layout."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["prior", "n_ok", "n_failed", "n_diagnostics_failed"]
        for n in METRIC_NAMES:
            header += [f"{n}_mean", f"{n}_sd"]
        w.writerow(header)
        for prior, e in summary.items():
            row = [prior, e["n_ok"], e["n_failed"], e["n_diagnostics_failed"]]
            for n in METRIC_NAMES:
                row += [repr(e[n][0]), repr(e[n][1])]
            w.writerow(row)


def write_timing_csv(summary: dict, path) -> None:
    """Mean (minimum, maximum) CPU minutes per prior."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prior", "cpu_minutes_mean", "cpu_minutes_min", "cpu_minutes_max"])
        for prior, e in summary.items():
            w.writerow([prior, repr(e["cpu_minutes"][0]), repr(e["cpu_min"]), repr(e["cpu_max"])])
