"""
Convergence diagnostics: rank-normalized split R-hat and bulk effective sample size.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

RHAT_THRESHOLD = 1.05
ESS_THRESHOLD = 250.0


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected an array of shape (chains, draws)")
    return x


def _split(x):
    n = x.shape[1] // 2
    # the middle draw is dropped for odd lengths
    return np.concatenate([x[:, :n], x[:, -n:]], axis=0)


def _rank_normalize(x):
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return special.ndtri((ranks - 0.375) / (x.size + 0.25))


def _rhat(x):
    m, n = x.shape
    chain_means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * chain_means.var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _degenerate(x):
    return not np.all(np.isfinite(x)) or np.ptp(x) == 0.0


def split_rhat(x) -> float:
    """Rank-normalized split R-hat (maximum of the bulk and folded versions).

    Returns ``nan`` when the draws have zero variance.
    """
    x = _as_chains(x)
    if _degenerate(x) or x.shape[1] < 4:
        return float("nan")
    xs = _split(x)
    if np.any(xs.var(axis=1) == 0):
        return float("nan")
    bulk = _rhat(_rank_normalize(xs))
    folded = np.abs(xs - np.median(xs))
    tail = _rhat(_rank_normalize(folded)) if not _degenerate(folded) else bulk
    return max(bulk, tail)


def _autocov(x):
    """Biased autocovariance of each row via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n]
    return acov / n


def _ess(x):
    """ESS with Geyer's initial monotone sequence estimator."""
    m, n = x.shape
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1]
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def ess_bulk(x) -> float:
    """Bulk effective sample size of rank-normalized split chains."""
    x = _as_chains(x)
    if _degenerate(x) or x.shape[1] < 8:
        return float("nan")
    xs = _split(x)
    return _ess(_rank_normalize(xs))


def ess_basic(x) -> float:
    """ESS of the raw (not rank-normalized) split chains, for Monte Carlo errors of means."""
    x = _as_chains(x)
    if _degenerate(x) or x.shape[1] < 8:
        return float("nan")
    return _ess(_split(x))


@dataclass
class DiagnosticReport:
    names: list
    rhat: np.ndarray
    ess: np.ndarray
    divergences: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    treedepth_hits: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    rhat_threshold: float = RHAT_THRESHOLD
    ess_threshold: float = ESS_THRESHOLD

    @property
    def degenerate(self) -> list:
        return [n for n, r in zip(self.names, self.rhat) if not np.isfinite(r)]

    @property
    def max_rhat(self) -> float:
        return float(np.nanmax(self.rhat)) if np.any(np.isfinite(self.rhat)) else float("nan")

    @property
    def min_ess(self) -> float:
        return float(np.nanmin(self.ess)) if np.any(np.isfinite(self.ess)) else float("nan")

    @property
    def failing(self) -> list:
        """Parameters violating a threshold; degenerate ones count as failures."""
        out = []
        for name, r, e in zip(self.names, self.rhat, self.ess):
            if not (np.isfinite(r) and np.isfinite(e)) or r >= self.rhat_threshold or e <= self.ess_threshold:
                out.append(name)
        return out

    @property
    def passed(self) -> bool:
        return not self.failing

    def to_dict(self) -> dict:
        return {
            "max_rhat": self.max_rhat,
            "min_ess": self.min_ess,
            "rhat_threshold": self.rhat_threshold,
            "ess_threshold": self.ess_threshold,
            "passed": self.passed,
            "failing": self.failing,
            "degenerate": self.degenerate,
            "divergences": [int(v) for v in self.divergences],
            "treedepth_hits": [int(v) for v in self.treedepth_hits],
        }


def diagnose(draws, names=None, divergences=None, treedepth_hits=None) -> DiagnosticReport:
    """Per-parameter split R-hat and bulk ESS for ``draws`` of shape (chains, iters, D)."""
    draws = np.asarray(draws, float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    chains, iters, D = draws.shape
    if chains < 2 or iters < 100:
        raise ValueError("diagnostics need at least 2 chains and 100 retained iterations")
    names = list(names) if names is not None else [f"x[{i}]" for i in range(D)]
    rhat = np.array([split_rhat(draws[:, :, k]) for k in range(D)])
    ess = np.array([ess_bulk(draws[:, :, k]) for k in range(D)])
    return DiagnosticReport(
        names, rhat, ess,
        np.asarray(divergences if divergences is not None else [], int),
        np.asarray(treedepth_hits if treedepth_hits is not None else [], int),
    )
