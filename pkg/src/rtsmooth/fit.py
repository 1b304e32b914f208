"""
Fit a renewal model to a case series and summarize the posterior.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import DiagnosticReport
from .model import ModelSpec, RenewalModel
from .sampler import PosteriorDraws, SamplerConfig, nuts_sample
from .timeseries import CaseSeries

SUMMARY_LEVELS = (0.005, 0.025, 0.1, 0.5, 0.9, 0.975, 0.995)


@dataclass
class FitResult:
    spec: ModelSpec
    model: RenewalModel
    draws: PosteriorDraws
    rt_draws: np.ndarray  # (n_draws, T)
    cpu_seconds: float

    @property
    def report(self) -> DiagnosticReport:
        return self.draws.diagnostics()

    @property
    def cpu_minutes(self) -> float:
        return self.cpu_seconds / 60.0

    def rt_summary(self):
        from .evaluation import RtPosteriorSummary
        return RtPosteriorSummary.from_draws(self.rt_draws)

    def param_summary(self) -> dict:
        """Median and central 95% interval of each scalar parameter."""
        out = {}
        for name in self.model.scalar_names:
            x = self.draws[name].ravel()
            lo, med, hi = np.quantile(x, [0.025, 0.5, 0.975])
            out[name] = {"median": float(med), "q025": float(lo), "q975": float(hi)}
        return out


def rt_draws(model: RenewalModel, draws: PosteriorDraws) -> np.ndarray:
    """Posterior draws of R_t, one row per retained draw (chains concatenated)."""
    return np.exp(draws.flat("gamma"))


def fit(spec: ModelSpec, cases: CaseSeries, config: SamplerConfig | None = None) -> FitResult:
    """Run NUTS on the posterior of ``spec`` given ``cases``."""
    config = config or SamplerConfig()
    t0 = time.process_time()
    model = RenewalModel(spec, cases)
    draws = nuts_sample(model, config=config)
    R = rt_draws(model, draws)
    # chains may run in worker processes; their CPU time is recorded per chain
    elapsed = time.process_time() - t0
    cpu = max(elapsed, draws.cpu_seconds)
    return FitResult(spec, model, draws, R, cpu)
