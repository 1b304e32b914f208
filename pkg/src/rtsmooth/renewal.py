"""
Renewal-equation likelihood for weekly case counts.

Latent incidence is indexed ``t = -n..T``. Seeds ``I_{-n}..I_0`` are
exponential with mean ``lambda``; for ``t >= 1``

    I_t ~ Gamma(shape = R_t * Lambda_t * nu, rate = nu),
    Lambda_t = sum_j g_{t-j} I_j,

and observed cases are negative binomial with mean ``rho * D_t`` where
``D_t = sum_j d_{t-j} I_j`` and variance ``mu + mu^2 / kappa``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import special, stats

from .errors import InvalidParameterError, InvalidStateError
from .timeseries import CaseSeries, DiscretizedPMF


@dataclass(frozen=True)
class LatentIncidence:
    """Seeded incidence ``I_{-n}..I_0`` and observation-period incidence ``I_1..I_T``."""

    seeded: np.ndarray
    observed_period: np.ndarray

    def __post_init__(self):
        seeded = np.atleast_1d(np.asarray(self.seeded, float))
        obs = np.atleast_1d(np.asarray(self.observed_period, float))
        if not (np.all(seeded > 0) and np.all(obs > 0)):
            raise InvalidStateError("latent incidence must be strictly positive")
        object.__setattr__(self, "seeded", seeded)
        object.__setattr__(self, "observed_period", obs)

    @property
    def n(self) -> int:
        return self.seeded.size - 1

    @property
    def T(self) -> int:
        return self.observed_period.size

    @property
    def full(self) -> np.ndarray:
        """All incidence, position ``j + n`` holding ``I_j``."""
        return np.concatenate([self.seeded, self.observed_period])


@dataclass(frozen=True)
class NuisanceParams:
    rho: float
    kappa: float
    nu: float
    lam: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{f.name} must be positive, got {value}")
        if self.rho >= 1:
            raise InvalidParameterError(f"rho must be below 1, got {self.rho}")


# ----------------------------------------------------------------- hyperpriors

_FAMILIES = {
    "normal": ("mu", "sigma"),
    "lognormal": ("mu", "sigma"),
    "truncnormal": ("mu", "sigma", "lower"),
    "exponential": ("rate",),
    "gamma": ("shape", "rate"),
}


@dataclass(frozen=True)
class ScalarPrior:
    """A univariate prior on the constrained scale.

    ``truncnormal`` is a normal truncated to ``(lower, inf)`` and
    renormalized; ``gamma`` uses the shape/rate convention.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidParameterError(f"unknown prior family {self.family!r}")
        params = tuple(float(p) for p in self.params)
        if self.family == "truncnormal" and len(params) == 2:
            params = params + (0.0,)
        if len(params) != len(_FAMILIES[self.family]):
            raise InvalidParameterError(f"{self.family} takes parameters {_FAMILIES[self.family]}")
        object.__setattr__(self, "params", params)
        named = dict(zip(_FAMILIES[self.family], params))
        for key in ("sigma", "rate", "shape"):
            if key in named and not named[key] > 0:
                raise InvalidParameterError(f"{self.family} {key} must be positive")
        if self.family == "truncnormal":
            z = (named["lower"] - named["mu"]) / named["sigma"]
            object.__setattr__(self, "_log_norm", float(special.log_ndtr(-z)))

    @classmethod
    def from_config(cls, value) -> "ScalarPrior":
        """Build from ``{"family": ..., <param>: ...}`` or ``[family, p1, p2, ...]``."""
        if isinstance(value, ScalarPrior):
            return value
        if isinstance(value, dict):
            family = str(value.get("family", "")).lower().replace("-", "").replace("_", "")
            names = _FAMILIES.get(family)
            if names is None:
                raise InvalidParameterError(f"unknown prior family {value.get('family')!r}")
            args = []
            for name in names:
                if name in value:
                    args.append(value[name])
                elif family == "truncnormal" and name == "lower":
                    args.append(0.0)
                else:
                    raise InvalidParameterError(f"{family} prior missing {name!r}")
            return cls(family, tuple(args))
        family, *args = value
        return cls(str(family).lower().replace("-", "").replace("_", ""), tuple(args))

    def to_config(self) -> dict:
        return {"family": self.family, **dict(zip(_FAMILIES[self.family], self.params))}

    @property
    def positive(self) -> bool:
        return self.family != "normal"

    def logpdf(self, x: float) -> float:
        return self.logpdf_grad(x)[0]

    def logpdf_grad(self, x: float):
        """Log density at ``x`` and its derivative with respect to ``x``."""
        f, p = self.family, self.params
        if f == "normal":
            mu, s = p
            r = (x - mu) / s
            return -0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * r * r, -r / s
        if x <= 0:
            return -math.inf, 0.0
        if f == "lognormal":
            mu, s = p
            lx = math.log(x)
            r = (lx - mu) / s
            value = -lx - 0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * r * r
            return value, (-1.0 - r / s) / x
        if f == "truncnormal":
            mu, s, lower = p
            if x <= lower:
                return -math.inf, 0.0
            r = (x - mu) / s
            return -0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * r * r - self._log_norm, -r / s
        if f == "exponential":
            (rate,) = p
            return math.log(rate) - rate * x, -rate
        shape, rate = p
        value = shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x
        return value, (shape - 1) / x - rate

    def mean(self) -> float:
        f, p = self.family, self.params
        if f == "normal":
            return p[0]
        if f == "lognormal":
            return math.exp(p[0] + p[1] ** 2 / 2)
        if f == "truncnormal":
            mu, s, lower = p
            return float(stats.truncnorm((lower - mu) / s, np.inf, loc=mu, scale=s).mean())
        if f == "exponential":
            return 1.0 / p[0]
        return p[0] / p[1]

    def median(self) -> float:
        f, p = self.family, self.params
        if f == "normal":
            return p[0]
        if f == "lognormal":
            return math.exp(p[0])
        if f == "truncnormal":
            mu, s, lower = p
            return float(stats.truncnorm((lower - mu) / s, np.inf, loc=mu, scale=s).median())
        if f == "exponential":
            return math.log(2.0) / p[0]
        return float(stats.gamma(p[0], scale=1.0 / p[1]).median())

    def sample(self, rng, size=None):
        f, p = self.family, self.params
        if f == "normal":
            return rng.normal(p[0], p[1], size)
        if f == "lognormal":
            return np.exp(rng.normal(p[0], p[1], size))
        if f == "truncnormal":
            mu, s, lower = p
            return stats.truncnorm.rvs((lower - mu) / s, np.inf, loc=mu, scale=s, size=size, random_state=rng)
        if f == "exponential":
            return rng.exponential(1.0 / p[0], size)
        return rng.gamma(p[0], 1.0 / p[1], size)


def _lognormal(mu, sigma):
    return ScalarPrior("lognormal", (mu, sigma))


DEFAULT_SIGMA_PRIORS = {
    "rw1": _lognormal(-0.6, 0.6),
    "ou": _lognormal(-2.6, 0.6),
    "rw2": _lognormal(-2.0, 0.6),
    "ibm": _lognormal(-0.5, 0.6),
    # the HSGP kernel magnitude alpha
    "hsgp": _lognormal(-0.6, 0.6),
}


@dataclass(frozen=True)
class HyperPriorSpec:
    """Priors on the nuisance and smoothing hyperparameters.

    Defaults reproduce the simulation-study prior table. ``sigma`` maps each
    prior kind to the prior of its scale parameter (``alpha`` for HSGP).
    """

    rho: ScalarPrior = _lognormal(-3.0, 0.3)
    kappa: ScalarPrior = ScalarPrior("truncnormal", (70.0, 80.0, 0.0))
    nu: ScalarPrior = _lognormal(-2.0, 0.7)
    lam: ScalarPrior = ScalarPrior("exponential", (0.3,))
    mu1: float = 0.0
    sigma1: float = 0.5
    mu1_prime: float = 0.0
    sigma: dict = field(default_factory=lambda: dict(DEFAULT_SIGMA_PRIORS))
    theta: ScalarPrior = ScalarPrior("exponential", (1.0,))
    ell: ScalarPrior = ScalarPrior("gamma", (100.0, 20.0))

    def __post_init__(self):
        if not self.sigma1 > 0:
            raise InvalidParameterError("sigma1 must be positive")
        merged = dict(DEFAULT_SIGMA_PRIORS)
        merged.update({k.lower(): ScalarPrior.from_config(v) for k, v in self.sigma.items()})
        object.__setattr__(self, "sigma", merged)
        for name in ("rho", "kappa", "nu", "lam", "theta", "ell"):
            prior = ScalarPrior.from_config(getattr(self, name))
            if not prior.positive:
                raise InvalidParameterError(f"{name} needs a prior on (0, inf)")
            object.__setattr__(self, name, prior)

    @classmethod
    def from_config(cls, cfg: dict | None) -> "HyperPriorSpec":
        cfg = dict(cfg or {})
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        unknown = set(cfg) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidParameterError(f"unknown hyperprior keys: {sorted(unknown)}")
        return replace(cls(), **cfg)

    def to_config(self) -> dict:
        return {
            "rho": self.rho.to_config(), "kappa": self.kappa.to_config(),
            "nu": self.nu.to_config(), "lambda": self.lam.to_config(),
            "mu1": self.mu1, "sigma1": self.sigma1, "mu1_prime": self.mu1_prime,
            "sigma": {k: v.to_config() for k, v in self.sigma.items()},
            "theta": self.theta.to_config(), "ell": self.ell.to_config(),
        }


# ------------------------------------------------------------------ convolutions

def _check_t(t, T):
    if not 1 <= t <= T:
        raise IndexError(f"t={t} outside 1..{T}")


def renewal_load(incidence: LatentIncidence, g: DiscretizedPMF, t: int) -> float:
    """Generation-weighted sum of earlier incidence, ``sum_j g_{t-j} I_j`` for j < t."""
    if g.kind != "generation":
        raise InvalidParameterError("renewal_load needs a generation-time PMF")
    if incidence.n < g.max_lag:
        raise InvalidParameterError(
            f"seeding length {incidence.n} shorter than generation max lag {g.max_lag}"
        )
    _check_t(t, incidence.T)
    full = incidence.full
    n = incidence.n
    total = 0.0
    for lag in range(1, g.max_lag + 1):
        total += g.probs[lag] * full[t - lag + n]
    return total


def delay_load(incidence: LatentIncidence, d: DiscretizedPMF, t: int) -> float:
    """Delay-weighted incidence ``sum_j d_{t-j} I_j`` over ``-n <= j <= t``."""
    _check_t(t, incidence.T)
    full = incidence.full
    n = incidence.n
    total = 0.0
    for lag in range(0, min(d.max_lag, t + n) + 1):
        total += d.probs[lag] * full[t - lag + n]
    return total


def convolution_matrix(pmf: DiscretizedPMF, n: int, T: int) -> np.ndarray:
    """``T x (n+1+T)`` matrix ``A`` with ``(A @ I_full)[t-1]`` the lagged sum at week t."""
    A = np.zeros((T, n + 1 + T))
    for t in range(1, T + 1):
        for lag, p in enumerate(pmf.probs):
            col = t - lag + n
            if p != 0.0 and col >= 0:
                A[t - 1, col] = p
    return A


# ------------------------------------------------------------------ likelihoods

def nb_logpmf(y, mu, kappa):
    """Negative binomial log pmf with mean ``mu`` and variance ``mu + mu^2/kappa``."""
    y = np.asarray(y, float)
    mu = np.asarray(mu, float)
    return (special.gammaln(y + kappa) - special.gammaln(kappa) - special.gammaln(y + 1.0)
            - kappa * np.log1p(mu / kappa) + y * (np.log(mu) - np.log(kappa + mu)))


def nb_logpmf_grad(y, mu, kappa):
    """Derivatives of :func:`nb_logpmf` with respect to ``mu`` and ``kappa``."""
    y = np.asarray(y, float)
    km = kappa + mu
    dmu = y / mu - (y + kappa) / km
    dkappa = (special.digamma(y + kappa) - special.digamma(kappa)
              - np.log1p(mu / kappa) + (mu - y) / km)
    return dmu, dkappa


def loglik_obs(O: CaseSeries, incidence: LatentIncidence, rho, kappa, d: DiscretizedPMF) -> float:
    counts = O.counts if isinstance(O, CaseSeries) else np.asarray(O)
    if counts.size != incidence.T:
        raise InvalidParameterError("case series and incidence differ in length")
    D = convolution_matrix(d, incidence.n, incidence.T) @ incidence.full
    mu = rho * D
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise InvalidStateError("non-positive expected cases; incidence underflow")
    return float(np.sum(nb_logpmf(counts, mu, kappa)))


def loglik_incidence(incidence: LatentIncidence, Gamma, nu, lam, g: DiscretizedPMF) -> float:
    Gamma = np.asarray(Gamma, float)
    if Gamma.size != incidence.T:
        raise InvalidParameterError("Gamma and incidence differ in length")
    if incidence.n < g.max_lag:
        raise InvalidParameterError("seeding length shorter than generation max lag")
    Lam = convolution_matrix(g, incidence.n, incidence.T) @ incidence.full
    shape = np.exp(Gamma) * Lam * nu
    if np.any(shape <= 0) or not np.all(np.isfinite(shape)):
        raise InvalidStateError("non-positive gamma shape in the renewal step")
    seeds = incidence.seeded
    seed_term = np.sum(-math.log(lam) - seeds / lam)
    I = incidence.observed_period
    obs_term = np.sum(shape * math.log(nu) - special.gammaln(shape) + (shape - 1) * np.log(I) - nu * I)
    return float(seed_term + obs_term)


def incidence_moments(Rt, load, nu):
    """Conditional mean and variance of ``I_t`` given ``R_t``, ``Lambda_t`` and ``nu``."""
    shape = np.asarray(Rt) * np.asarray(load) * nu
    return shape / nu, shape / nu**2


# ------------------------------------------------------------------ simulation

def simulate_renewal(Rt, g: DiscretizedPMF, d: DiscretizedPMF, nuisance: NuisanceParams,
                     n: int | None = None, seed=None, seeds=None):
    """Forward-simulate the renewal model.

    Returns ``(CaseSeries, LatentIncidence)``. ``seeds`` overrides the
    exponential draws of ``I_{-n}..I_0``.
    """
    rng = np.random.default_rng(seed)
    Rt = np.asarray(Rt, float)
    T = Rt.size
    n = g.max_lag if n is None else n
    if seeds is None:
        seeds = rng.exponential(nuisance.lam, n + 1)
    seeds = np.asarray(seeds, float)
    if seeds.size != n + 1:
        raise InvalidParameterError(f"need {n + 1} seeds, got {seeds.size}")
    full = np.concatenate([seeds, np.zeros(T)])
    for t in range(1, T + 1):
        lags = np.arange(1, g.max_lag + 1)
        load = np.dot(g.probs[1:], full[t - lags + n])
        full[t + n] = max(rng.gamma(Rt[t - 1] * load * nuisance.nu, 1.0 / nuisance.nu), 1e-300)
    incidence = LatentIncidence(full[: n + 1], full[n + 1:])
    D = convolution_matrix(d, n, T) @ full
    mu = nuisance.rho * D
    k = nuisance.kappa
    counts = rng.negative_binomial(k, k / (k + mu))
    return CaseSeries(counts), incidence
