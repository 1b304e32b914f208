"""
Posterior density over latent incidence, the log-R path and hyperparameters.

All positive quantities are sampled on the log scale, with the log-Jacobian
added to the density; ``Gamma`` (and ``Gamma'`` for IBM, or the whitened
weights ``z`` for HSGP) are unconstrained already.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from . import _kernel as _k
from . import priors
from .errors import ConfigError, InvalidParameterError
from .renewal import (
    HyperPriorSpec,
    LatentIncidence,
    ScalarPrior,
    loglik_incidence,
    loglik_obs,
)
from .timeseries import CaseSeries, DiscretizedPMF

_SCALARS = ("log_rho", "log_kappa", "log_nu", "log_lambda")


def _prior_row(prior: ScalarPrior) -> list:
    row = [float(_k.FAMILY_CODES[prior.family]), 0.0, 0.0, 0.0, 0.0]
    row[1:1 + len(prior.params)] = prior.params
    if prior.family == "truncnormal":
        row[4] = prior._log_norm
    elif prior.family == "gamma":
        row[4] = math.lgamma(prior.params[0])
    return row


@dataclass(frozen=True)
class ModelSpec:
    """Everything that, together with the data, fixes the posterior.

    Parameters
    ----------
    prior : {"rw1", "ou", "rw2", "ibm", "hsgp"}
    generation : DiscretizedPMF
        Generation-time PMF (zero mass at lag 0).
    delay : DiscretizedPMF
        Infection-to-observation delay PMF.
    hyper : HyperPriorSpec
    seed_weeks : int, optional
        Seeding length ``n``; defaults to the generation PMF's last lag.
    ell_ref : float, optional
        Length scale used to size the HSGP basis; defaults to the prior mean of ``ell``.
    """

    prior: str
    generation: DiscretizedPMF
    delay: DiscretizedPMF
    hyper: HyperPriorSpec = field(default_factory=HyperPriorSpec)
    seed_weeks: int | None = None
    ell_ref: float | None = None

    def __post_init__(self):
        kind = str(self.prior).lower()
        if kind not in priors.PRIOR_KINDS:
            raise ConfigError(f"unknown prior {self.prior!r}; choose from {priors.PRIOR_KINDS}")
        object.__setattr__(self, "prior", kind)
        if self.generation.kind != "generation":
            raise ConfigError("generation PMF must have kind='generation'")
        if self.seed_weeks is not None and self.seed_weeks < self.generation.max_lag:
            raise ConfigError(
                f"seed_weeks={self.seed_weeks} is shorter than the generation max lag "
                f"{self.generation.max_lag}"
            )

    @property
    def n(self) -> int:
        return self.generation.max_lag if self.seed_weeks is None else int(self.seed_weeks)

    def with_prior(self, kind: str) -> "ModelSpec":
        return ModelSpec(kind, self.generation, self.delay, self.hyper, self.seed_weeks, self.ell_ref)


class ParameterLayout:
    """Named slices partitioning the unconstrained parameter vector."""

    def __init__(self, sizes):
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.dim = start

    def __contains__(self, name):
        return name in self.slices

    def __getitem__(self, name):
        return self.slices[name]

    @property
    def names(self):
        return list(self.slices)

    def size(self, name):
        s = self.slices[name]
        return s.stop - s.start


@dataclass
class ParameterBlock:
    """Unconstrained vector plus its layout, with named views."""

    unconstrained: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        self.unconstrained = np.asarray(self.unconstrained, float)
        if self.unconstrained.shape != (self.layout.dim,):
            raise InvalidParameterError(
                f"expected vector of length {self.layout.dim}, got {self.unconstrained.shape}"
            )

    def __getitem__(self, name):
        return self.unconstrained[self.layout[name]]

    @property
    def D(self) -> int:
        return self.layout.dim


class RenewalModel:
    """Log posterior and gradient for one prior choice and one case series.

    ``cases`` may be ``None`` (with ``T`` given) to drop the observation
    likelihood, leaving latent-incidence, prior and hyperprior terms.
    """

    def __init__(self, spec: ModelSpec, cases: CaseSeries | None, T: int | None = None):
        self.spec = spec
        if cases is None:
            if T is None:
                raise InvalidParameterError("give either cases or T")
            self.counts = None
            self.T = int(T)
        else:
            self.counts = np.asarray(cases.counts, float)
            self.T = cases.T
        T = self.T
        self.kind = spec.prior
        self.n = spec.n
        self.hyper = spec.hyper
        self.basis = None
        if self.kind == "hsgp":
            ell_ref = spec.ell_ref if spec.ell_ref is not None else self.hyper.ell.mean()
            self.basis = priors.hsgp_basis(T, ell_ref)
        sizes = []
        if self.kind == "hsgp":
            sizes.append(("z", self.basis.M))
        else:
            sizes.append(("gamma", T))
        if self.kind == "ibm":
            sizes.append(("gamma_prime", T))
        sizes += [("log_I_seed", self.n + 1), ("log_I_obs", T)]
        sizes += [(name, 1) for name in _SCALARS]
        sizes.append(("log_alpha" if self.kind == "hsgp" else "log_sigma", 1))
        if self.kind == "ou":
            sizes.append(("log_theta", 1))
        if self.kind == "hsgp":
            sizes.append(("log_ell", 1))
        self.layout = ParameterLayout(sizes)
        self.dim = self.layout.dim
        self._scale_name = "log_alpha" if self.kind == "hsgp" else "log_sigma"
        self._constrained_names = self._build_names()
        self._args = self._kernel_args()
        self._scratch = np.empty(self.dim)

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_scratch")
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._scratch = np.empty(self.dim)

    # ------------------------------------------------------------ layout

    def _build_names(self):
        T, names = self.T, []
        names += [f"gamma[{t}]" for t in range(1, T + 1)]
        if self.kind == "ibm":
            names += [f"gamma_prime[{t}]" for t in range(1, T + 1)]
        if self.kind == "hsgp":
            names += [f"z[{j}]" for j in range(1, self.basis.M + 1)]
        names += [f"I[{j}]" for j in range(-self.n, 1)]
        names += [f"I[{t}]" for t in range(1, T + 1)]
        names += ["rho", "kappa", "nu", "lambda"]
        names.append("alpha" if self.kind == "hsgp" else "sigma")
        if self.kind == "ou":
            names.append("theta")
        if self.kind == "hsgp":
            names.append("ell")
        return names

    @property
    def constrained_names(self) -> list[str]:
        return list(self._constrained_names)

    @property
    def scalar_names(self) -> list[str]:
        """Names of the scalar (non-path, non-incidence) parameters."""
        return [n for n in self._constrained_names if "[" not in n]

    def block(self, x) -> ParameterBlock:
        return ParameterBlock(x, self.layout)

    def gamma_path(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        L = self.layout
        if self.kind != "hsgp":
            return x[L["gamma"]].copy()
        alpha = math.exp(x[L["log_alpha"]][0])
        ell = math.exp(x[L["log_ell"]][0])
        return priors.hsgp_gamma(x[L["z"]], alpha, ell, self.basis)

    def constrain(self, x) -> np.ndarray:
        """Map an unconstrained vector to the constrained-scale output vector."""
        x = np.asarray(x, float)
        L = self.layout
        parts = [self.gamma_path(x)]
        if self.kind == "ibm":
            parts.append(x[L["gamma_prime"]])
        if self.kind == "hsgp":
            parts.append(x[L["z"]])
        parts += [np.exp(x[L["log_I_seed"]]), np.exp(x[L["log_I_obs"]])]
        tail = _SCALARS + (self._scale_name,)
        if self.kind == "ou":
            tail += ("log_theta",)
        if self.kind == "hsgp":
            tail += ("log_ell",)
        parts.append(np.exp(np.concatenate([x[L[name]] for name in tail])))
        return np.concatenate(parts)

    def encode(self, values: dict) -> ParameterBlock:
        """Build an unconstrained block from constrained values.

        Keys: ``gamma`` (or ``z``), ``gamma_prime``, ``I_seed``, ``I_obs``,
        ``rho``, ``kappa``, ``nu``, ``lambda``, ``sigma``/``alpha``,
        ``theta``, ``ell``.
        """
        x = np.empty(self.dim)
        L = self.layout
        for name in L.names:
            if name.startswith("log_"):
                key = name[4:]
                x[L[name]] = np.log(np.asarray(values[key], float))
            else:
                x[L[name]] = np.asarray(values[name], float)
        return self.block(x)

    def decode(self, block) -> dict:
        """Inverse of :meth:`encode`."""
        x = block.unconstrained if isinstance(block, ParameterBlock) else np.asarray(block, float)
        out = {}
        for name in self.layout.names:
            v = x[self.layout[name]]
            if name.startswith("log_"):
                v = np.exp(v)
                name = name[4:]
            out[name] = float(v[0]) if v.size == 1 and name not in ("I_seed", "I_obs") else v.copy()
        return out

    def prior_hyper(self, x) -> priors.PriorHyper:
        d = self.decode(x)
        h = self.hyper
        kw = dict(mu1=h.mu1, sigma1=h.sigma1, mu1_prime=h.mu1_prime)
        if self.kind == "hsgp":
            return priors.PriorHyper("hsgp", alpha=d["alpha"], ell=d["ell"], **kw)
        if self.kind == "ou":
            return priors.PriorHyper("ou", sigma=d["sigma"], theta=d["theta"], **kw)
        return priors.PriorHyper(self.kind, sigma=d["sigma"], **kw)

    def incidence(self, x) -> LatentIncidence:
        d = self.decode(x)
        return LatentIncidence(d["I_seed"], d["I_obs"])

    # ----------------------------------------------------------- density

    def _kernel_args(self):
        L = self.layout
        off = np.full(10, -1, dtype=np.int64)
        off[_k.PATH] = L["z" if self.kind == "hsgp" else "gamma"].start
        if self.kind == "ibm":
            off[_k.GPRIME] = L["gamma_prime"].start
        off[_k.SEED] = L["log_I_seed"].start
        for idx, name in zip((_k.RHO, _k.KAPPA, _k.NU, _k.LAM, _k.SCALE),
                             _SCALARS + (self._scale_name,)):
            off[idx] = L[name].start
        if self.kind == "ou":
            off[_k.THETA] = L["log_theta"].start
        if self.kind == "hsgp":
            off[_k.ELL] = L["log_ell"].start
        h = self.hyper
        table = [h.rho, h.kappa, h.nu, h.lam, h.sigma[self.kind], h.theta, h.ell]
        ptab = np.array([_prior_row(p) for p in table])
        init = np.array([h.mu1, h.sigma1, h.mu1_prime])
        if self.basis is not None:
            Phi, eigs = np.ascontiguousarray(self.basis.Phi), self.basis.sqrt_eigs.copy()
        else:
            Phi, eigs = np.zeros((1, 0)), np.zeros(0)
        counts = self.counts if self.counts is not None else np.zeros(self.T)
        obs_const = float(sum(math.lgamma(y + 1.0) for y in counts))
        return (_k.KIND_CODES[self.kind], self.T, self.n, np.ascontiguousarray(counts, float),
                self.counts is not None, self.spec.generation.probs.copy(),
                self.spec.delay.probs.copy(), off, ptab, init, Phi, eigs, obs_const)

    def log_posterior(self, x) -> float:
        """Log posterior density (up to a constant) at unconstrained ``x``."""
        x = x.unconstrained if isinstance(x, ParameterBlock) else x
        x = np.ascontiguousarray(x, dtype=float)
        return float(_k.log_posterior_kernel(x, self._scratch, False, *self._args))

    def logp_and_grad(self, x):
        """Log posterior and its exact gradient at unconstrained ``x``.

        Outside the support the value is ``-inf`` and the gradient is undefined.
        """
        x = x.unconstrained if isinstance(x, ParameterBlock) else x
        x = np.ascontiguousarray(x, dtype=float)
        grad = np.empty(self.dim)
        value = _k.log_posterior_kernel(x, grad, True, *self._args)
        return float(value), grad

    def numba_target(self):
        """The compiled density and its argument tuple, for the compiled sampler path."""
        return _k.log_posterior_kernel, self._args

    def terms(self, x) -> dict:
        """Additive decomposition of the log posterior, from the reference numpy functions."""
        x = x.unconstrained if isinstance(x, ParameterBlock) else np.asarray(x, float)
        d = self.decode(x)
        hyp = self.hyper
        inc = LatentIncidence(d["I_seed"], d["I_obs"])
        gamma = self.gamma_path(x)
        out = {}
        if self.counts is not None:
            out["obs"] = loglik_obs(self.counts, inc, d["rho"], d["kappa"], self.spec.delay)
        else:
            out["obs"] = 0.0
        out["incidence"] = loglik_incidence(inc, gamma, d["nu"], d["lambda"], self.spec.generation)
        path = priors.GammaPath(gamma, gamma_prime=d.get("gamma_prime"), z=d.get("z"))
        out["gamma_prior"] = priors.logprior(path, self.prior_hyper(x), self.basis)
        scale = "alpha" if self.kind == "hsgp" else "sigma"
        hp = (hyp.rho.logpdf(d["rho"]) + hyp.kappa.logpdf(d["kappa"]) + hyp.nu.logpdf(d["nu"])
              + hyp.lam.logpdf(d["lambda"]) + hyp.sigma[self.kind].logpdf(d[scale]))
        if self.kind == "ou":
            hp += hyp.theta.logpdf(d["theta"])
        if self.kind == "hsgp":
            hp += hyp.ell.logpdf(d["ell"])
        out["hyperprior"] = hp
        L = self.layout
        out["jacobian"] = float(sum(np.sum(x[L[name]]) for name in L.names if name.startswith("log_")))
        return out

    # ------------------------------------------------------ initialization

    def initial_point(self, rng) -> np.ndarray:
        """Random start: Gamma (or z, Gamma') at 0, log-incidence from smoothed cases."""
        L = self.layout
        x = rng.uniform(-2.0, 2.0, self.dim)
        for name in ("gamma", "gamma_prime", "z"):
            if name in L:
                x[L[name]] = 0.0
        rho0 = self.hyper.rho.median()
        x[L["log_rho"]] = math.log(rho0) + rng.uniform(-0.3, 0.3)
        if self.counts is not None:
            kernel = np.array([0.25, 0.5, 0.25])
            padded = np.pad(self.counts, 1, mode="edge")
            smooth = np.convolve(padded, kernel, mode="valid")
            level = np.maximum(smooth, 1.0) / rho0
        else:
            level = np.full(self.T, 10.0)
        # the delay shifts observations later than infections
        shift = int(round(float(np.dot(np.arange(len(self.spec.delay)), self.spec.delay.probs))))
        level = np.concatenate([level[shift:], np.repeat(level[-1], shift)])
        x[L["log_I_obs"]] = np.log(level) + rng.uniform(-0.1, 0.1, self.T)
        x[L["log_I_seed"]] = math.log(level[0]) + rng.uniform(-0.1, 0.1, self.n + 1)
        if self.kind == "hsgp":
            x[L["log_ell"]] = math.log(self.hyper.ell.median()) + rng.uniform(-0.2, 0.2)
        return x

    def random_point(self, rng, scale=0.3) -> np.ndarray:
        """A random point in the typical region: hyperparameters drawn from
        their priors, paths and incidence jittered around the initialization."""
        x = self.initial_point(rng)
        L = self.layout
        h = self.hyper
        draws = {"log_rho": h.rho, "log_kappa": h.kappa, "log_nu": h.nu,
                 self._scale_name: h.sigma[self.kind], "log_theta": h.theta, "log_ell": h.ell}
        for name, prior in draws.items():
            if name in L:
                x[L[name]] = math.log(min(float(prior.sample(rng)), 0.99) if name == "log_rho"
                                      else float(prior.sample(rng)))
        x[L["log_lambda"]] = math.log(float(np.exp(x[L["log_I_seed"]]).mean()))
        if "z" in L:
            x[L["z"]] += rng.normal(0.0, scale, L.size("z"))
        else:
            # a smooth random path keeps the IBM/RW2 densities in their typical range
            t = np.arange(self.T)
            amp, freq, phase = rng.normal(0.0, scale), rng.uniform(0.05, 0.3), rng.uniform(0, 2 * np.pi)
            path = amp * np.sin(freq * t + phase) + rng.normal(0.0, 0.02, self.T)
            x[L["gamma"]] = path
            if "gamma_prime" in L:
                step = math.exp(2.0 * x[L["log_sigma"]][0])
                slope = amp * freq * np.cos(freq * t + phase) / step
                x[L["gamma_prime"]] = slope + rng.normal(0.0, 0.3 * math.sqrt(step), self.T)
        x[L["log_I_obs"]] += rng.normal(0.0, 0.1, self.T)
        return x


def log_posterior(params: ParameterBlock, O: CaseSeries | None, spec: ModelSpec) -> float:
    """Log posterior of ``spec`` at ``params`` given cases ``O``.

    With ``O=None`` the observation likelihood is dropped and the length of
    the series is taken from the block's layout.
    """
    T = None if O is not None else params.layout.size("log_I_obs")
    model = RenewalModel(spec, O, T=T)
    if model.layout.slices != params.layout.slices:
        raise InvalidParameterError("parameter layout does not match the model")
    return model.log_posterior(params)
