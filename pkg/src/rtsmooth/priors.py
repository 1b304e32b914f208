"""
Gaussian priors on the log reproduction number path ``Gamma_t = log R_t``.

Four Markov priors (RW1, OU, RW2, IBM) are evaluated as products of
low-order Gaussian transition densities; the Matern-3/2 Gaussian process is
approximated in a reduced-rank Hilbert-space (Laplacian eigenfunction) basis
and parameterized by whitened basis weights ``z``.

Every ``*_terms`` function returns the log density together with its
gradient, which the posterior in :mod:`rtsmooth.model` chains through.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateApproximationError, InvalidParameterError

PRIOR_KINDS = ("rw1", "ou", "rw2", "ibm", "hsgp")
MARKOV_KINDS = ("rw1", "ou", "rw2", "ibm")
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorHyper:
    """Hyperparameter values for one prior.

    ``sigma`` scales the Markov priors; ``theta`` is the OU reversion
    strength; ``alpha`` and ``ell`` are the Matern magnitude and length
    scale. ``mu1``/``sigma1`` give the initial state, ``mu1_prime`` the
    initial IBM derivative.
    """

    kind: str
    sigma: float | None = None
    theta: float | None = None
    alpha: float | None = None
    ell: float | None = None
    mu1: float = 0.0
    sigma1: float = 0.5
    mu1_prime: float = 0.0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in PRIOR_KINDS:
            raise InvalidParameterError(f"unknown prior kind {self.kind!r}")
        need = {"sigma": kind != "hsgp", "theta": kind == "ou",
                "alpha": kind == "hsgp", "ell": kind == "hsgp"}
        for name, required in need.items():
            value = getattr(self, name)
            if required and value is None:
                raise InvalidParameterError(f"{kind} prior requires {name}")
            if not required and value is not None:
                raise InvalidParameterError(f"{kind} prior does not take {name}")
            if value is not None and not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value}")
        if not self.sigma1 > 0:
            raise InvalidParameterError("sigma1 must be positive")


@dataclass(frozen=True)
class GammaPath:
    """A log-R path, with the IBM derivative path or HSGP weights when used."""

    gamma: np.ndarray
    gamma_prime: np.ndarray | None = None
    z: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, float))
        if self.gamma_prime is not None:
            gp = np.asarray(self.gamma_prime, float)
            if gp.shape != self.gamma.shape:
                raise InvalidParameterError("gamma_prime must match gamma in length")
            object.__setattr__(self, "gamma_prime", gp)
        if self.z is not None:
            object.__setattr__(self, "z", np.asarray(self.z, float))
        if not np.all(np.isfinite(self.gamma)):
            raise InvalidParameterError("gamma must be finite")

    @property
    def T(self) -> int:
        return self.gamma.size


def normal_logpdf(x, mean, var):
    r = x - mean
    return -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * r * r / var


# --------------------------------------------------------------------- RW1

def rw1_terms(gamma, sigma, mu1=0.0, sigma1=0.5):
    """Log density of a first-order random walk with step variance sigma^2/(T-1).

    Returns ``(value, d/dgamma, d/dlog(sigma))``.
    """
    gamma = np.asarray(gamma, float)
    T = gamma.size
    if T < 2:
        raise InvalidParameterError("RW1 needs T >= 2")
    v = sigma * sigma / (T - 1)
    r = np.diff(gamma)
    r1 = gamma[0] - mu1
    value = (-0.5 * (_LOG_2PI + 2 * math.log(sigma1)) - 0.5 * r1 * r1 / sigma1**2
             - 0.5 * (T - 1) * (_LOG_2PI + math.log(v)) - 0.5 * np.dot(r, r) / v)
    g = np.zeros(T)
    g[0] = -r1 / sigma1**2
    w = r / v
    g[1:] -= w
    g[:-1] += w
    # v scales as sigma^2, so d/dlog(sigma) = 2 v d/dv
    dlogsig = -(T - 1) + np.dot(r, r) / v
    return value, g, dlogsig


def logprior_rw1(path: GammaPath, h: PriorHyper, T: int | None = None) -> float:
    if T is not None and T != path.T:
        raise InvalidParameterError(f"path has length {path.T}, expected {T}")
    return float(rw1_terms(path.gamma, h.sigma, h.mu1, h.sigma1)[0])


# ---------------------------------------------------------------------- OU

def _ou_var_factor(theta):
    """(1 - exp(-2 theta)) / (2 theta) and its theta-derivative."""
    if theta < 1e-5:
        f = 1.0 - theta + 2.0 * theta**2 / 3.0
        df = -1.0 + 4.0 * theta / 3.0
    else:
        f = -math.expm1(-2.0 * theta) / (2.0 * theta)
        df = (math.exp(-2.0 * theta) - f) / theta
    return f, df


def ou_terms(gamma, sigma, theta, mu1=0.0, sigma1=0.5):
    """Log density of the OU prior (stationary mean 0, unit time step).

    Returns ``(value, d/dgamma, d/dlog(sigma), d/dlog(theta))``.
    """
    gamma = np.asarray(gamma, float)
    if not theta > 0:
        raise InvalidParameterError("OU reversion theta must be positive; use RW1 for theta = 0")
    T = gamma.size
    decay = math.exp(-theta)
    f, df = _ou_var_factor(theta)
    v = sigma * sigma * f
    r = gamma[1:] - decay * gamma[:-1]
    r1 = gamma[0] - mu1
    n = T - 1
    rr = np.dot(r, r)
    value = (-0.5 * (_LOG_2PI + 2 * math.log(sigma1)) - 0.5 * r1 * r1 / sigma1**2
             - 0.5 * n * (_LOG_2PI + math.log(v)) - 0.5 * rr / v)
    g = np.zeros(T)
    g[0] = -r1 / sigma1**2
    w = r / v
    g[1:] -= w
    g[:-1] += decay * w
    dv = -0.5 * n / v + 0.5 * rr / v**2
    dlogsig = dv * 2.0 * v
    # dr/dtheta = decay * gamma[:-1]
    dtheta = -np.dot(w, decay * gamma[:-1]) + dv * sigma * sigma * df
    return value, g, dlogsig, dtheta * theta


def logprior_ou(path: GammaPath, h: PriorHyper) -> float:
    return float(ou_terms(path.gamma, h.sigma, h.theta, h.mu1, h.sigma1)[0])


# --------------------------------------------------------------------- RW2

def rw2_terms(gamma, sigma, mu1=0.0, sigma1=0.5):
    """Log density of the second-order random walk.

    ``Gamma_2 | Gamma_1 ~ N(Gamma_1, sigma^2)`` and second differences are
    ``N(0, sigma^2)``. Returns ``(value, d/dgamma, d/dlog(sigma))``.
    """
    gamma = np.asarray(gamma, float)
    T = gamma.size
    if T < 3:
        raise InvalidParameterError("RW2 needs T >= 3")
    v = sigma * sigma
    r1 = gamma[0] - mu1
    r2 = gamma[1] - gamma[0]
    rs = gamma[2:] - 2.0 * gamma[1:-1] + gamma[:-2]
    n = T - 1
    rr = r2 * r2 + np.dot(rs, rs)
    value = (-0.5 * (_LOG_2PI + 2 * math.log(sigma1)) - 0.5 * r1 * r1 / sigma1**2
             - 0.5 * n * (_LOG_2PI + math.log(v)) - 0.5 * rr / v)
    g = np.zeros(T)
    g[0] = -r1 / sigma1**2
    g[1] -= r2 / v
    g[0] += r2 / v
    w = rs / v
    g[2:] -= w
    g[1:-1] += 2.0 * w
    g[:-2] -= w
    dlogsig = -n + rr / v
    return value, g, dlogsig


def logprior_rw2(path: GammaPath, h: PriorHyper) -> float:
    return float(rw2_terms(path.gamma, h.sigma, h.mu1, h.sigma1)[0])


# --------------------------------------------------------------------- IBM

def ibm_transition_cov(step):
    """Covariance of (derivative, value) increments over a time step."""
    return np.array([[step, step**2 / 2.0], [step**2 / 2.0, step**3 / 3.0]])


def _ibm_cov_chol(step):
    r = math.sqrt(step)
    return np.array([[r, 0.0], [r * step / 2.0, r * step / (2.0 * math.sqrt(3.0))]])


def _ibm_pair_terms(e1, e2, step):
    """Bivariate Gaussian log density of residuals under ``ibm_transition_cov(step)``.

    Uses the closed-form inverse ``[[4/h, -6/h^2], [-6/h^2, 12/h^3]]`` and
    ``det = h^4 / 12``. Returns value and derivatives w.r.t. e1, e2 and h.
    """
    h = step
    h2, h3 = h * h, h * h * h
    quad = 4.0 * e1 * e1 / h - 12.0 * e1 * e2 / h2 + 12.0 * e2 * e2 / h3
    value = -_LOG_2PI - 0.5 * (4.0 * math.log(h) - math.log(12.0)) - 0.5 * quad
    de1 = -(4.0 * e1 / h - 6.0 * e2 / h2)
    de2 = -(-6.0 * e1 / h2 + 12.0 * e2 / h3)
    dquad_dh = -4.0 * e1 * e1 / h2 + 24.0 * e1 * e2 / h3 - 36.0 * e2 * e2 / (h2 * h2)
    dh = -2.0 / h - 0.5 * dquad_dh
    return value, de1, de2, dh


def ibm_terms(gamma, gamma_prime, sigma, mu1=0.0, sigma1=0.5, mu1_prime=0.0):
    """Log density of the integrated Brownian motion prior on (Gamma', Gamma).

    The time step of the underlying Wiener process is ``sigma^2``; the
    initial pair uses the same covariance form with ``sigma1``.
    Returns ``(value, d/dgamma, d/dgamma_prime, d/dlog(sigma))``.
    """
    gamma = np.asarray(gamma, float)
    gp = np.asarray(gamma_prime, float)
    h = sigma * sigma
    v0, a0, b0, _ = _ibm_pair_terms(gp[0] - mu1_prime, gamma[0] - mu1, sigma1 * sigma1)
    e1 = gp[1:] - gp[:-1]
    e2 = gamma[1:] - gamma[:-1] - h * gp[:-1]
    v, de1, de2, dh = _ibm_pair_terms(e1, e2, h)
    value = v0 + np.sum(v)
    g = np.zeros_like(gamma)
    gpg = np.zeros_like(gp)
    g[0] += b0
    gpg[0] += a0
    g[1:] += de2
    g[:-1] -= de2
    gpg[1:] += de1
    gpg[:-1] -= de1 + h * de2
    # e2 depends on h through -h * gp[:-1]
    dh_total = np.sum(dh) + np.dot(de2, -gp[:-1])
    return float(value), g, gpg, dh_total * 2.0 * h


def logprior_ibm(path: GammaPath, h: PriorHyper) -> float:
    if path.gamma_prime is None:
        raise InvalidParameterError("IBM prior needs gamma_prime")
    return float(ibm_terms(path.gamma, path.gamma_prime, h.sigma, h.mu1, h.sigma1, h.mu1_prime)[0])


# -------------------------------------------------------------------- HSGP

class HSGPBasis(NamedTuple):
    Phi: np.ndarray
    sqrt_eigs: np.ndarray
    M: int
    L: float
    c: float
    x: np.ndarray


def hsgp_settings(T: int, ell_ref: float) -> tuple[float, int]:
    """Boundary factor ``c`` and basis size ``M`` for a series of length ``T``.

    ``c = max(4.5 ell / S, 1.2)`` and ``M = ceil(3.45 c S / ell)`` with
    half-range ``S = (T - 1) / 2``.
    """
    if T < 2:
        raise InvalidParameterError("HSGP needs T >= 2")
    if not ell_ref > 0:
        raise InvalidParameterError("reference length scale must be positive")
    half = (T - 1) / 2.0
    c = max(4.5 * ell_ref / half, 1.2)
    M = math.ceil(3.45 * c * half / ell_ref - 1e-9)
    return c, M


def hsgp_basis(T: int, ell_ref: float) -> HSGPBasis:
    """Laplacian eigenfunctions on ``[-L, L]`` evaluated at the centred time grid."""
    c, M = hsgp_settings(T, ell_ref)
    if M < 1:
        raise DegenerateApproximationError(f"basis size computed as {M}")
    half = (T - 1) / 2.0
    x = np.arange(T, dtype=float) - half
    L = c * half
    j = np.arange(1, M + 1)
    sqrt_eigs = math.pi * j / (2.0 * L)
    Phi = np.sin(np.outer(x + L, sqrt_eigs)) / math.sqrt(L)
    return HSGPBasis(Phi, sqrt_eigs, M, L, c, x)


def matern32_kernel(dt, alpha, ell):
    a = math.sqrt(3.0) * np.abs(dt) / ell
    return alpha * alpha * (1.0 + a) * np.exp(-a)


def matern32_spectral_density(omega, alpha, ell):
    """One-dimensional spectral density of the Matern-3/2 kernel."""
    return alpha**2 * 4.0 * 3.0**1.5 / ell**3 / (3.0 / ell**2 + np.asarray(omega) ** 2) ** 2


def hsgp_scales(basis: HSGPBasis, alpha, ell):
    """sqrt of the spectral density at each basis frequency, and d log/d log(ell)."""
    w2 = basis.sqrt_eigs**2
    s = np.sqrt(matern32_spectral_density(basis.sqrt_eigs, alpha, ell))
    dlog_s_dlog_ell = -1.5 + (6.0 / ell**2) / (3.0 / ell**2 + w2)
    return s, dlog_s_dlog_ell


def hsgp_gamma(z, alpha, ell, basis: HSGPBasis):
    s, _ = hsgp_scales(basis, alpha, ell)
    return basis.Phi @ (s * np.asarray(z, float))


def hsgp_covariance(basis: HSGPBasis, alpha, ell):
    s, _ = hsgp_scales(basis, alpha, ell)
    return (basis.Phi * s**2) @ basis.Phi.T


def hsgp_terms(z):
    """Standard normal log density of the whitened weights and its gradient."""
    z = np.asarray(z, float)
    return -0.5 * (z.size * _LOG_2PI + np.dot(z, z)), -z


def logprior_hsgp(path: GammaPath, h: PriorHyper, basis: HSGPBasis) -> float:
    """Log density of the HSGP weights; ``path.gamma`` must equal the implied path."""
    if path.z is None:
        raise InvalidParameterError("HSGP prior is evaluated on the whitened weights z")
    if not (h.alpha > 0 and h.ell > 0):
        raise InvalidParameterError("alpha and ell must be positive")
    if path.z.size != basis.M:
        raise InvalidParameterError(f"z has {path.z.size} weights, basis has {basis.M}")
    return float(hsgp_terms(path.z)[0])


def logprior(path: GammaPath, h: PriorHyper, basis: HSGPBasis | None = None) -> float:
    """Dispatch to the log density of ``h.kind``."""
    if h.kind == "rw1":
        return logprior_rw1(path, h)
    if h.kind == "ou":
        return logprior_ou(path, h)
    if h.kind == "rw2":
        return logprior_rw2(path, h)
    if h.kind == "ibm":
        return logprior_ibm(path, h)
    if basis is None:
        raise InvalidParameterError("HSGP prior needs a basis")
    return logprior_hsgp(path, h, basis)


# ---------------------------------------------------------------- sampling

def sample_prior(kind: str, h: PriorHyper, T: int, seed=None, basis: HSGPBasis | None = None) -> GammaPath:
    """Draw one path by ancestral sampling from the transition densities."""
    kind = kind.lower()
    if kind != h.kind:
        raise InvalidParameterError(f"hyperparameters are for {h.kind}, not {kind}")
    rng = np.random.default_rng(seed)
    gamma = np.empty(T)
    if kind == "hsgp":
        basis = basis if basis is not None else hsgp_basis(T, h.ell)
        z = rng.standard_normal(basis.M)
        return GammaPath(hsgp_gamma(z, h.alpha, h.ell, basis), z=z)
    if kind == "ibm":
        gp = np.empty(T)
        d0 = _ibm_cov_chol(h.sigma1**2) @ rng.standard_normal(2)
        gp[0], gamma[0] = h.mu1_prime + d0[0], h.mu1 + d0[1]
        step = h.sigma**2
        Lq = _ibm_cov_chol(step)
        for t in range(1, T):
            e = Lq @ rng.standard_normal(2)
            gp[t] = gp[t - 1] + e[0]
            gamma[t] = gamma[t - 1] + step * gp[t - 1] + e[1]
        return GammaPath(gamma, gamma_prime=gp)
    gamma[0] = h.mu1 + h.sigma1 * rng.standard_normal()
    if kind == "rw1":
        gamma[1:] = gamma[0] + np.cumsum(h.sigma / math.sqrt(T - 1) * rng.standard_normal(T - 1))
    elif kind == "ou":
        decay = math.exp(-h.theta)
        sd = h.sigma * math.sqrt(_ou_var_factor(h.theta)[0])
        for t in range(1, T):
            gamma[t] = decay * gamma[t - 1] + sd * rng.standard_normal()
    elif kind == "rw2":
        gamma[1] = gamma[0] + h.sigma * rng.standard_normal()
        for t in range(2, T):
            gamma[t] = 2 * gamma[t - 1] - gamma[t - 2] + h.sigma * rng.standard_normal()
    return GammaPath(gamma)
