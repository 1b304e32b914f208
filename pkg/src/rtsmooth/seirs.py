"""
Stochastic SEIRS outbreak simulator.

Chain-binomial tau-leaping of a closed Susceptible-Exposed-Infectious-
Removed-Susceptible population with a time-varying transmission rate.
Time is measured in weeks. Weekly counts of E-to-I transitions (E2I) are
the latent signal behind the observed cases.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigError, InvalidParameterError, RtSmoothError
from .timeseries import CaseSeries, DiscretizedPMF

__all__ = [
    "BetaProfile",
    "SeirsParams",
    "OutbreakTruth",
    "DEFAULT_R0_KNOTS",
    "DEFAULT_DT",
    "default_beta",
    "simulate_seirs",
    "true_rt",
    "observe_cases",
    "weekly_kernels",
    "write_truth_csv",
]

# (week, R0) knots of the default scenario: a winter wave, a summer lull and
# a late-year rise that is cut off again at the end of the year.
DEFAULT_R0_KNOTS = (
    (0.0, 1.6),
    (10.0, 1.6),
    (20.0, 1.0),
    (31.0, 1.0),
    (38.0, 1.5),
    (41.0, 1.5),
    (47.0, 0.55),
    (53.0, 0.55),
)

# half an hour, in weeks: the tau-leap bias in weekly E2I is first order in
# dt and about 50% at one-day steps for the default scenario
DEFAULT_DT = 1.0 / 336.0


@dataclass(frozen=True)
class BetaProfile:
    """Transmission rate beta(t) interpolated between knots, constant beyond the end knots.

    Parameters
    ----------
    weeks : array_like
        Strictly increasing knot times.
    values : array_like
        Non-negative transmission rates (per week) at the knots.
    interpolation : {"linear", "pchip"}
        ``"pchip"`` is the monotone cubic Hermite interpolant: continuously
        differentiable, no overshoot between knots, so it stays non-negative.
    """

    weeks: tuple
    values: tuple
    interpolation: str = "linear"

    def __post_init__(self):
        w = np.asarray(self.weeks, float)
        v = np.asarray(self.values, float)
        if w.ndim != 1 or w.size == 0 or w.shape != v.shape:
            raise InvalidParameterError("weeks and values must be equal-length non-empty vectors")
        if np.any(np.diff(w) <= 0):
            raise InvalidParameterError("beta knot weeks must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidParameterError("beta values must be finite and non-negative")
        object.__setattr__(self, "weeks", tuple(float(x) for x in w))
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        if self.interpolation not in ("linear", "pchip"):
            raise InvalidParameterError(f"unknown interpolation {self.interpolation!r}")

    def __call__(self, t):
        if self.interpolation == "linear" or len(self.weeks) < 2:
            return np.interp(t, self.weeks, self.values)
        from scipy.interpolate import PchipInterpolator

        t = np.clip(t, self.weeks[0], self.weeks[-1])
        return PchipInterpolator(self.weeks, self.values)(t)

    @classmethod
    def constant(cls, value) -> "BetaProfile":
        return cls((0.0,), (float(value),))

    @classmethod
    def from_r0(cls, knots, gamma_I, interpolation="linear") -> "BetaProfile":
        """Build from ``(week, R0)`` pairs using beta = R0 * gamma_I."""
        knots = np.asarray(knots, float)
        return cls(tuple(knots[:, 0]), tuple(knots[:, 1] * gamma_I), interpolation)


@dataclass(frozen=True)
class SeirsParams:
    """SEIRS rates (per week) and initial conditions.

    Defaults are a population of 600,000 with 50 initially infectious, a
    4-day latent period, a 7.5-day infectious period and 12 weeks of immunity.
    """

    N: int = 600_000
    I0: int = 50
    beta: BetaProfile | None = None
    sigma_L: float = 7.0 / 4.0
    gamma_I: float = 7.0 / 7.5
    omega: float = 1.0 / 12.0
    horizon: int = 53

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.gamma_I))
        if not (int(self.N) == self.N and int(self.I0) == self.I0):
            raise InvalidParameterError("N and I0 must be integers")
        if not self.N >= self.I0 > 0:
            raise InvalidParameterError(f"need N >= I0 > 0, got N={self.N}, I0={self.I0}")
        for name in ("sigma_L", "gamma_I", "omega"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be a positive rate, got {value}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidParameterError("horizon must be a positive number of weeks")

    def r0(self, t):
        return self.beta(t) / self.gamma_I

    def to_config(self) -> dict:
        return {
            "N": int(self.N), "I0": int(self.I0), "sigma_L": self.sigma_L,
            "gamma_I": self.gamma_I, "omega": self.omega, "horizon": int(self.horizon),
            "beta": {"weeks": list(self.beta.weeks), "values": list(self.beta.values),
                     "interpolation": self.beta.interpolation},
        }

    @classmethod
    def from_config(cls, d: dict | None) -> "SeirsParams":
        """Build from a mapping; ``beta`` may give ``weeks``/``values`` or ``r0_knots``."""
        d = dict(d or {})
        known = {"N", "I0", "sigma_L", "gamma_I", "omega", "horizon", "beta"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        beta = d.pop("beta", None)
        try:
            p = cls(**d)
            if beta is not None:
                interp = beta.get("interpolation", "linear")
                if "r0_knots" in beta:
                    profile = BetaProfile.from_r0(beta["r0_knots"], p.gamma_I, interp)
                else:
                    profile = BetaProfile(tuple(beta["weeks"]), tuple(beta["values"]), interp)
                p = cls(**{**d, "beta": profile})
        except (InvalidParameterError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        return p


def default_beta(gamma_I=7.0 / 7.5) -> BetaProfile:
    """The shipped transmission profile: an approximation of a winter wave,
    summer lull and late-year resurgence."""
    return BetaProfile.from_r0(DEFAULT_R0_KNOTS, gamma_I)


@dataclass(frozen=True)
class OutbreakTruth:
    """Weekly output of one simulation.

    ``S``, ``E``, ``I``, ``R`` hold the compartments at the start of each
    week; ``e2i`` counts E-to-I transitions during the week. ``steps`` holds
    every tau-leap state when requested.
    """

    e2i: np.ndarray
    true_rt: np.ndarray
    S: np.ndarray
    E: np.ndarray
    I: np.ndarray
    R: np.ndarray
    params: SeirsParams
    dt: float
    cases: CaseSeries | None = None
    steps: np.ndarray | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.e2i.size

    def with_cases(self, cases: CaseSeries) -> "OutbreakTruth":
        return OutbreakTruth(self.e2i, self.true_rt, self.S, self.E, self.I, self.R,
                             self.params, self.dt, cases, self.steps)


@numba.njit(cache=True)
def _tau_leap(rng, state, betas, per_week, N, pE, pI, pR, dt, weekly, e2i, steps, record):
    S, E, I, R = state[0], state[1], state[2], state[3]
    k = 0
    for w in range(e2i.size):
        weekly[w, 0], weekly[w, 1], weekly[w, 2], weekly[w, 3] = S, E, I, R
        for _ in range(per_week):
            force = betas[k] * I / N
            new_e = rng.binomial(S, -math.expm1(-force * dt)) if force > 0 else 0
            new_i = rng.binomial(E, pE)
            new_r = rng.binomial(I, pI)
            new_s = rng.binomial(R, pR)
            S += new_s - new_e
            E += new_e - new_i
            I += new_i - new_r
            R += new_r - new_s
            e2i[w] += new_i
            k += 1
            if record:
                steps[k, 0], steps[k, 1], steps[k, 2], steps[k, 3] = S, E, I, R


def simulate_seirs(p: SeirsParams, seed=None, dt=DEFAULT_DT, record_steps=False) -> OutbreakTruth:
    """Simulate one outbreak by chain-binomial tau-leaping.

    Parameters
    ----------
    p : SeirsParams
    seed : int or numpy.random.SeedSequence, optional
    dt : float
        Step in weeks; at most one day (1/7). The default of half an hour keeps
        the discretization error of the weekly E2I means near 1%.
    record_steps : bool
        Keep the (S, E, I, R) state after every step.
    """
    if not 0 < dt <= 1.0 / 7.0 + 1e-12:
        raise InvalidParameterError(f"dt must be in (0, 1/7] weeks, got {dt}")
    per_week = round(1.0 / dt)
    if abs(per_week * dt - 1.0) > 1e-9:
        raise InvalidParameterError("dt must divide one week into a whole number of steps")
    rng = np.random.default_rng(seed)
    N = int(p.N)
    W = int(p.horizon)
    weekly = np.empty((W, 4), dtype=np.int64)
    e2i = np.zeros(W, dtype=np.int64)
    steps = np.empty((W * per_week + 1 if record_steps else 1, 4), dtype=np.int64)
    state = np.array([N - int(p.I0), 0, int(p.I0), 0], dtype=np.int64)
    steps[0] = state
    betas = np.asarray(p.beta(np.arange(W * per_week) * dt), dtype=float)
    _tau_leap(rng, state, betas, per_week, float(N), -math.expm1(-p.sigma_L * dt),
              -math.expm1(-p.gamma_I * dt), -math.expm1(-p.omega * dt), float(dt),
              weekly, e2i, steps, record_steps)
    truth = OutbreakTruth(e2i, np.empty(0), weekly[:, 0], weekly[:, 1], weekly[:, 2],
                          weekly[:, 3], p, float(dt), None, None)
    return OutbreakTruth(e2i, true_rt(truth, p), *(weekly[:, i] for i in range(4)),
                         p, float(dt), None, steps if record_steps else None)


def true_rt(truth: OutbreakTruth, p: SeirsParams | None = None) -> np.ndarray:
    """Weekly R_t = R0(t) * S/N, using the week-start time and susceptibles."""
    p = p or truth.params
    weeks = np.arange(truth.S.size, dtype=float)
    return p.r0(weeks) * truth.S / p.N


def observe_cases(truth: OutbreakTruth, rho=0.05, kappa=5.0, seed=None) -> CaseSeries:
    """Negative binomial weekly cases with mean ``rho * e2i`` and overdispersion ``kappa``."""
    if not 0 < rho < 1:
        raise InvalidParameterError(f"rho must lie in (0, 1), got {rho}")
    if not kappa > 0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa}")
    rng = np.random.default_rng(seed)
    mu = rho * truth.e2i.astype(float)
    counts = np.zeros(mu.size, dtype=np.int64)
    pos = mu > 0
    counts[pos] = rng.negative_binomial(kappa, kappa / (kappa + mu[pos]))
    return CaseSeries(counts)


def _weekly_from_integrated_cdf(A, coverage=0.999, cap=104):
    """Lag masses A(k+1) - 2A(k) + A(k-1) for an infection time uniform within the week.

    ``A`` is the integral of the continuous CDF from 0 (zero for negative times).
    """
    ks = np.arange(cap + 1, dtype=float)
    mass = A(ks + 1) - 2.0 * A(ks) + A(np.maximum(ks - 1, 0.0)) * (ks >= 1)
    mass = np.clip(mass, 0.0, None)
    last = int(np.searchsorted(np.cumsum(mass), coverage))
    return mass[: last + 1]


def _growth_to_r(pmf, rates):
    """Euler-Lotka reproduction numbers 1 / sum_k g_k exp(-r k) of a weekly kernel."""
    k = np.arange(pmf.size)
    return 1.0 / (np.exp(-np.outer(rates, k)) @ pmf)


def weekly_kernels(p: SeirsParams | None = None, growth_range=(-0.5, 0.5)):
    """Weekly generation-time and infection-to-E2I PMFs matched to the SEIRS rates.

    The delay PMF is exact: an exponential latent period with infection
    times uniform within the week. The generation interval (latent period
    plus an exponential time to transmission) puts some mass in the same
    week, which the renewal sum cannot represent. Simply dropping that mass
    lengthens the kernel and inflates |log R|, so instead the generation
    PMF is a weekly-discretized gamma whose mean and sd are chosen to
    reproduce the continuous-time relation R(r) = (1 + r/sigma_L)(1 + r/gamma_I)
    over weekly growth rates ``r`` in ``growth_range``.

    Returns
    -------
    generation, delay : DiscretizedPMF
    """
    from scipy.optimize import minimize

    from .timeseries import discretize_gamma

    p = p or SeirsParams()
    s, g = p.sigma_L, p.gamma_I

    def A_latent(t):
        return t - (1.0 - np.exp(-s * t)) / s

    delay = _weekly_from_integrated_cdf(A_latent)
    rates = np.linspace(growth_range[0], growth_range[1], 21)
    target = np.log((1.0 + rates / s) * (1.0 + rates / g))

    def loss(theta):
        mean, sd = np.exp(theta)
        try:
            pmf = discretize_gamma(mean, sd, kind="generation").probs
        except RtSmoothError:
            return 1e9
        return float(np.sum((np.log(_growth_to_r(pmf, rates)) - target) ** 2))

    mean_days = 7.0 * (1.0 / s + 1.0 / g)
    starts = [(mean_days, 0.7 * mean_days), (0.5 * mean_days, 0.5 * mean_days), (0.25 * mean_days, 0.5 * mean_days)]
    best = min((minimize(loss, np.log(x0), method="Nelder-Mead",
                         options={"xatol": 1e-6, "fatol": 1e-12}) for x0 in starts),
               key=lambda r: r.fun)
    mean, sd = np.exp(best.x)
    gen = discretize_gamma(mean, sd, kind="generation")
    meta = {"family": "seirs", "sigma_L": s, "gamma_I": g}
    return (DiscretizedPMF(gen.probs, "generation", {**meta, "gamma_mean_days": float(mean),
                                                      "gamma_sd_days": float(sd),
                                                      "fit_loss": float(best.fun)}),
            DiscretizedPMF(delay, "delay", meta))


def write_truth_csv(truth: OutbreakTruth, path) -> None:
    """Columns ``week,S,E,I,R,e2i,true_rt,cases`` (cases empty when unobserved)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "S", "E", "I", "R", "e2i", "true_rt", "cases"])
        for w in range(truth.horizon):
            cases = "" if truth.cases is None else int(truth.cases.counts[w])
            writer.writerow([w + 1, int(truth.S[w]), int(truth.E[w]), int(truth.I[w]),
                             int(truth.R[w]), int(truth.e2i[w]), repr(float(truth.true_rt[w])), cases])
