"""
Case series, discretized delay distributions and quantile helpers.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    DegenerateDistributionError,
    EmptySampleError,
    InvalidParameterError,
    ValidationError,
)

WEEK = dt.timedelta(days=7)
_PMF_KINDS = ("generation", "delay")


@dataclass(frozen=True)
class CaseSeries:
    """Weekly observed case counts ``O_1..O_T``.

    Parameters
    ----------
    counts : array_like of int
        Non-negative counts, one per week.
    start_date : datetime.date, optional
        Date of the first observation. Defaults to 2020-01-01 for synthetic data.
    step : datetime.timedelta
        Spacing between observations; only seven days is supported.
    """

    counts: np.ndarray
    start_date: dt.date = dt.date(2020, 1, 1)
    step: dt.timedelta = WEEK

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValidationError("counts must be one-dimensional")
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValidationError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        if counts.size < 2:
            raise ValidationError("a case series needs at least two observations")
        if self.step != WEEK:
            raise ValidationError("only weekly (7 day) series are supported")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def T(self) -> int:
        return int(self.counts.size)

    def __len__(self):
        return self.T

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + i * self.step for i in range(self.T)]

    def truncate(self, n_weeks: int) -> "CaseSeries":
        """Return the first ``n_weeks`` observations."""
        if not 2 <= n_weeks <= self.T:
            raise InvalidParameterError(f"cannot truncate a {self.T}-week series to {n_weeks}")
        return CaseSeries(self.counts[:n_weeks], self.start_date, self.step)


def read_case_csv(path) -> CaseSeries:
    """Read a ``date,cases`` CSV with consecutive weekly ISO-8601 dates."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["date", "cases"]:
            raise ValidationError(f"{path}: expected header 'date,cases', got {reader.fieldnames}")
        dates, counts = [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                dates.append(dt.date.fromisoformat(row["date"].strip()))
                counts.append(int(row["cases"]))
            except (ValueError, AttributeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    if len(dates) < 2:
        raise ValidationError(f"{path}: need at least two rows")
    for i in range(1, len(dates)):
        if dates[i] - dates[i - 1] != WEEK:
            raise ValidationError(
                f"{path}: rows {i + 1} and {i + 2} are not consecutive 7-day steps "
                f"({dates[i - 1]} -> {dates[i]})"
            )
    return CaseSeries(np.array(counts), start_date=dates[0])


def write_case_csv(series: CaseSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "cases"])
        for date, count in zip(series.dates, series.counts):
            writer.writerow([date.isoformat(), int(count)])


@dataclass(frozen=True)
class DiscretizedPMF:
    """Probability mass over integer lags ``0..L``.

    ``kind="generation"`` requires zero mass at lag 0, since the renewal sum
    only reaches back to strictly earlier weeks.
    """

    probs: np.ndarray
    kind: str = "delay"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in _PMF_KINDS:
            raise InvalidParameterError(f"kind must be one of {_PMF_KINDS}, got {self.kind!r}")
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidParameterError("probs must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidParameterError("probs must be finite and non-negative")
        total = p.sum()
        if total <= 0:
            raise DegenerateDistributionError("probs sum to zero")
        p = p / total
        if self.kind == "generation" and p[0] != 0.0:
            raise InvalidParameterError("a generation-time PMF must have p[0] == 0")
        if self.kind == "generation" and p.size < 2:
            raise InvalidParameterError("a generation-time PMF needs at least one positive lag")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def max_lag(self) -> int:
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size


def _default_max_lags(dist, step_days: float, coverage: float = 0.999, cap: int = 520) -> int:
    k = int(np.searchsorted(dist.cdf(step_days * np.arange(1, cap + 1)), coverage))
    return max(1, min(k, cap))


def discretize_gamma(mean, sd, step=7.0, max_lags=None, kind="delay") -> DiscretizedPMF:
    """Discretize a Gamma(mean, sd) distribution into bins of width ``step``.

    Bin ``k`` receives ``CDF((k+1) step) - CDF(k step)`` for ``k = 0..max_lags``.
    For ``kind="generation"`` the lag-0 bin is zeroed before renormalizing.

    Parameters
    ----------
    mean, sd : float
        Moments of the continuous distribution, in days.
    step : float or datetime.timedelta
        Bin width in days (7 for weekly data).
    max_lags : int, optional
        Last lag retained. Defaults to the smallest ``k`` whose cumulative
        mass ``CDF((k+1) step)`` reaches 0.999.
    kind : {"generation", "delay"}
    """
    if isinstance(step, dt.timedelta):
        step = step.total_seconds() / 86400.0
    if not (np.isfinite(mean) and mean > 0 and np.isfinite(sd) and sd > 0):
        raise InvalidParameterError(f"mean and sd must be positive, got mean={mean}, sd={sd}")
    if step <= 0:
        raise InvalidParameterError("step must be positive")
    if kind not in _PMF_KINDS:
        raise InvalidParameterError(f"kind must be one of {_PMF_KINDS}, got {kind!r}")
    shape = mean**2 / sd**2
    rate = mean / sd**2
    dist = stats.gamma(a=shape, scale=1.0 / rate)
    if max_lags is None:
        max_lags = _default_max_lags(dist, step)
    max_lags = int(max_lags)
    if max_lags < 1:
        raise InvalidParameterError("max_lags must be >= 1")
    edges = step * np.arange(max_lags + 2)
    # survival-function differences keep precision in the far tail
    sf = dist.sf(edges)
    mass = sf[:-1] - sf[1:]
    mass = np.clip(mass, 0.0, None)
    if kind == "generation":
        mass[0] = 0.0
    if mass.sum() < 1e-10:
        raise DegenerateDistributionError(
            f"Gamma(mean={mean}, sd={sd}) leaves no mass in {max_lags + 1} bins of {step} days"
        )
    return DiscretizedPMF(
        mass / mass.sum(),
        kind=kind,
        meta={"family": "gamma", "mean": float(mean), "sd": float(sd), "step": float(step)},
    )


def weighted_quantile(draws, q):
    """Type-7 (linear interpolation) empirical quantile of ``draws``.

    ``q`` may be a scalar or an array of levels in (0, 1).
    """
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    if x.size == 0:
        raise EmptySampleError("cannot take a quantile of an empty sample")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("draws must be finite")
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise InvalidParameterError("quantile levels must lie in [0, 1]")
    h = (x.size - 1) * q
    lo = np.floor(h).astype(int)
    hi = np.minimum(lo + 1, x.size - 1)
    out = x[lo] + (h - lo) * (x[hi] - x[lo])
    return float(out) if out.ndim == 0 else out


def quantiles_along(draws: np.ndarray, levels, axis=0) -> np.ndarray:
    """Type-7 quantiles of each column; result has ``len(levels)`` rows."""
    return np.quantile(np.asarray(draws, float), np.asarray(levels, float), axis=axis, method="linear")
