"""
No-U-Turn Hamiltonian Monte Carlo.

Multinomial NUTS with a diagonal metric, dual-averaging step-size adaptation
and a three-phase windowed warmup. Any object exposing ``dim`` and
``logp_and_grad(x) -> (value, grad)`` can be sampled; ``initial_point(rng)``,
``constrain(x)`` and ``constrained_names()`` are used when present.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _nuts
from .diagnostics import DiagnosticReport, diagnose
from .errors import InitializationError, InvalidParameterError

__all__ = [
    "SamplerConfig",
    "PosteriorDraws",
    "DensityModel",
    "grad_log_posterior",
    "nuts_sample",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``iters`` is the total number of iterations per chain, warmup included,
    so each chain retains ``iters - warmup`` draws.
    """

    chains: int = 4
    warmup: int = 2000
    iters: int = 6000
    seed: int = 0
    max_treedepth: int = 10
    target_accept: float = 0.8
    max_energy_error: float = 1000.0
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25
    init_attempts: int = 100
    jobs: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise InvalidParameterError("chains must be at least 1")
        if not 0 <= self.warmup < self.iters:
            raise InvalidParameterError("need 0 <= warmup < iters")
        if not 0.0 < self.target_accept < 1.0:
            raise InvalidParameterError("target_accept must lie in (0, 1)")
        if self.max_treedepth < 1 or self.max_energy_error <= 0:
            raise InvalidParameterError("max_treedepth and max_energy_error must be positive")

    @classmethod
    def from_config(cls, d: dict | None, **overrides) -> "SamplerConfig":
        d = dict(d or {})
        if "divergence_threshold" in d:
            d["max_energy_error"] = d.pop("divergence_threshold")
        d.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**d)

    def to_config(self) -> dict:
        return asdict(self)


class DensityModel:
    """Wrap a plain log-density function as a sampler target.

    Parameters
    ----------
    logp_and_grad : callable
        Maps an unconstrained vector to ``(value, grad)``.
    dim : int
    constrain : callable, optional
        Maps an unconstrained vector to the reported scale.
    names : list of str, optional
    """

    def __init__(self, logp_and_grad, dim, constrain=None, names=None, init_radius=2.0):
        self._f = logp_and_grad
        self.dim = int(dim)
        self._constrain = constrain
        self._names = list(names) if names is not None else [f"x[{i}]" for i in range(self.dim)]
        self.init_radius = init_radius

    def logp_and_grad(self, x):
        value, grad = self._f(x)
        return float(value), np.asarray(grad, float)

    def initial_point(self, rng):
        return rng.uniform(-self.init_radius, self.init_radius, self.dim)

    def constrain(self, x):
        return np.asarray(self._constrain(x) if self._constrain else x, float)

    def constrained_names(self):
        return list(self._names)


def grad_log_posterior(params, model):
    """Value and exact gradient of the model's log density at ``params``.

    A non-finite value is returned as ``(-inf, nan-vector)`` and is treated
    as a divergence by the sampler.
    """
    x = getattr(params, "unconstrained", params)
    value, grad = model.logp_and_grad(np.asarray(x, float))
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        return -math.inf, np.full(len(x), np.nan)
    return value, grad


# ---------------------------------------------------------------- results


@dataclass
class ChainStats:
    step_size: float
    inv_metric: np.ndarray
    divergences: int
    treedepth_hits: int
    accept_stat: np.ndarray
    treedepth: np.ndarray
    n_leapfrog: np.ndarray
    energy_error: np.ndarray
    divergent: np.ndarray
    warmup_divergences: int
    seconds: float


@dataclass
class PosteriorDraws:
    """Retained draws on the constrained scale, shape (chains, iters, D)."""

    draws: np.ndarray
    names: list
    unconstrained: np.ndarray
    logp: np.ndarray
    chain_stats: list
    config: SamplerConfig
    _report: DiagnosticReport | None = field(default=None, repr=False)

    @property
    def chains(self) -> int:
        return self.draws.shape[0]

    @property
    def iters(self) -> int:
        return self.draws.shape[1]

    @property
    def divergences(self) -> np.ndarray:
        return np.array([c.divergences for c in self.chain_stats])

    @property
    def treedepth_hits(self) -> np.ndarray:
        return np.array([c.treedepth_hits for c in self.chain_stats])

    @property
    def step_sizes(self) -> np.ndarray:
        return np.array([c.step_size for c in self.chain_stats])

    @property
    def inv_metrics(self) -> np.ndarray:
        return np.array([c.inv_metric for c in self.chain_stats])

    @property
    def cpu_seconds(self) -> float:
        return float(sum(c.seconds for c in self.chain_stats))

    def __getitem__(self, name) -> np.ndarray:
        """Draws of one named parameter, shape (chains, iters)."""
        return self.draws[:, :, self.names.index(name)]

    def select(self, prefix) -> np.ndarray:
        """Draws of all parameters named ``prefix[...]``, shape (chains, iters, k)."""
        idx = [i for i, n in enumerate(self.names) if n == prefix or n.startswith(prefix + "[")]
        return self.draws[:, :, idx]

    def flat(self, name=None) -> np.ndarray:
        x = self.draws if name is None else self.select(name)
        return x.reshape(-1, x.shape[-1])

    def diagnostics(self) -> DiagnosticReport:
        if self._report is None:
            self._report = diagnose(self.draws, self.names, self.divergences, self.treedepth_hits)
        return self._report


# ---------------------------------------------------------------- adaptation


class _DualAveraging:
    def __init__(self, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.delta, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def learn(self, accept_stat):
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    def final(self):
        return math.exp(self.x_bar)


class _Windows:
    """Fast / slow (doubling windows) / fast warmup schedule."""

    def __init__(self, warmup, init_buffer, term_buffer, base_window):
        self.warmup = warmup
        self.enabled = warmup >= 20
        if init_buffer + base_window + term_buffer > warmup:
            init_buffer = int(0.15 * warmup)
            term_buffer = int(0.1 * warmup)
            base_window = warmup - (init_buffer + term_buffer)
        self.init_buffer, self.term_buffer = init_buffer, term_buffer
        self.window_size = base_window
        self.next_end = init_buffer + base_window - 1
        self.counter = 0

    def in_window(self):
        return (self.enabled and self.counter >= self.init_buffer
                and self.counter < self.warmup - self.term_buffer and self.counter != self.warmup)

    def window_ends(self):
        return self.enabled and self.counter == self.next_end and self.counter != self.warmup

    def advance(self):
        last = self.warmup - self.term_buffer - 1
        if self.next_end == last:
            return
        self.window_size *= 2
        self.next_end = self.counter + self.window_size
        if self.next_end != last and self.next_end + 2 * self.window_size >= self.warmup - self.term_buffer:
            self.next_end = last


class _Welford:
    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized(self):
        n = self.n
        var = self.m2 / (n - 1.0)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


# ---------------------------------------------------------------- NUTS core


def _python_target(model):
    def fn(x, grad, want_grad):
        value, g = model.logp_and_grad(x)
        grad[:] = g
        return value
    return fn, ()


class _Chain:
    """State of one chain: position, metric, step size and its random stream."""

    def __init__(self, model, cfg: SamplerConfig, rng):
        self.model = model
        self.cfg = cfg
        self.rng = rng
        self.dim = int(model.dim)
        self.inv_metric = np.ones(self.dim)
        self.step_size = 1.0
        target = getattr(model, "numba_target", None)
        if target is not None:
            self.fn, self.args = target()
            self._transition, self._one_step = _nuts.compiled()
        else:
            self.fn, self.args = _python_target(model)
            self._transition, self._one_step = _nuts.transition_py, _nuts.one_step_py
        self._n_uniform = _nuts.uniforms_needed(cfg.max_treedepth)

    def logp(self, x):
        grad = np.empty(self.dim)
        value = float(self.fn(x, grad, True, *self.args))
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            return -math.inf, grad
        return value, grad

    def momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)

    def init_step_size(self, x, lp, g):
        """Double or halve the step size until one leapfrog step crosses 80% acceptance."""
        eps = self.step_size
        log_target = math.log(0.8)

        def delta_h(eps):
            return self._one_step(x, lp, g, self.momentum(), eps, self.inv_metric, self.fn, self.args)

        direction = 1 if delta_h(eps) > log_target else -1
        for _ in range(200):
            eps = eps * 2.0 if direction == 1 else eps / 2.0
            d = delta_h(eps)
            if direction == 1 and not d > log_target:
                break
            if direction == -1 and not d < log_target:
                break
            if eps > 1e7 or eps < 1e-12:
                break
        self.step_size = eps

    def transition(self, x, lp, g):
        p0 = self.momentum()
        u = self.rng.random(self._n_uniform)
        return self._transition(x, lp, g, p0, u, self.step_size, self.inv_metric,
                                self.cfg.max_treedepth, self.cfg.max_energy_error,
                                self.fn, self.args)


def _initialize(chain: _Chain, cfg):
    model = chain.model
    tried = []
    for _ in range(cfg.init_attempts):
        if hasattr(model, "initial_point"):
            x = np.asarray(model.initial_point(chain.rng), float)
        else:
            x = chain.rng.uniform(-2.0, 2.0, chain.dim)
        lp, grad = chain.logp(x)
        if math.isfinite(lp):
            return x, lp, grad
        if len(tried) < 3:
            tried.append({"x": x.tolist(), "logp": lp})
    raise InitializationError(
        f"no finite log density after {cfg.init_attempts} initialization attempts",
        dump={"attempts": cfg.init_attempts, "examples": tried},
    )


def _run_chain(model, cfg: SamplerConfig, seed_seq):
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_chain_inner(model, cfg, seed_seq)


def _run_chain_inner(model, cfg: SamplerConfig, seed_seq):
    t0 = time.process_time()
    rng = np.random.default_rng(seed_seq)
    chain = _Chain(model, cfg, rng)
    x, lp, g = _initialize(chain, cfg)
    chain.init_step_size(x, lp, g)
    da = _DualAveraging(cfg.target_accept)
    da.restart(chain.step_size)
    windows = _Windows(cfg.warmup, cfg.init_buffer, cfg.term_buffer, cfg.base_window)
    est = _Welford(chain.dim)
    warm_div = 0
    for _ in range(cfg.warmup):
        x, lp, g, _, _, accept, div, _ = chain.transition(x, lp, g)
        warm_div += div
        chain.step_size = da.learn(accept)
        if windows.in_window():
            est.add(x)
        if windows.window_ends():
            windows.advance()
            chain.inv_metric = est.regularized()
            est = _Welford(chain.dim)
            chain.init_step_size(x, lp, g)
            da.restart(chain.step_size)
        windows.counter += 1
    if cfg.warmup > 0:
        chain.step_size = da.final()

    n_keep = cfg.iters - cfg.warmup
    xs = np.empty((n_keep, chain.dim))
    logp = np.empty(n_keep)
    accept = np.empty(n_keep)
    depth = np.empty(n_keep, dtype=np.int64)
    nleap = np.empty(n_keep, dtype=np.int64)
    div = np.zeros(n_keep, dtype=bool)
    energy = np.empty(n_keep)
    for i in range(n_keep):
        x, lp, g, depth[i], nleap[i], accept[i], div[i], energy[i] = chain.transition(x, lp, g)
        xs[i] = x
        logp[i] = lp
    stats = ChainStats(
        step_size=chain.step_size,
        inv_metric=chain.inv_metric.copy(),
        divergences=int(div.sum()),
        treedepth_hits=int(np.sum(depth >= cfg.max_treedepth)),
        accept_stat=accept,
        treedepth=depth,
        n_leapfrog=nleap,
        energy_error=energy,
        divergent=div,
        warmup_divergences=int(warm_div),
        seconds=time.process_time() - t0,
    )
    return xs, logp, stats


def _run_chain_safe(args):
    model, cfg, seq = args
    try:
        return _run_chain(model, cfg, seq)
    except InitializationError as exc:
        return exc


def nuts_sample(model, chains=None, warmup=None, iters=None, seed=None,
                config: SamplerConfig | None = None, jobs=None) -> PosteriorDraws:
    """Draw posterior samples with NUTS.

    Parameters
    ----------
    model : object
        Target with ``dim`` and ``logp_and_grad``.
    chains, warmup, iters, seed : int, optional
        Override the corresponding ``config`` fields. ``iters`` counts warmup.
    config : SamplerConfig, optional
    jobs : int, optional
        Number of worker processes for the chains.

    Returns
    -------
    PosteriorDraws
        Retained draws decoded with ``model.constrain`` when available.

    Raises
    ------
    InitializationError
        If no chain finds a finite starting point.
    """
    cfg = config or SamplerConfig()
    overrides = {k: v for k, v in dict(chains=chains, warmup=warmup, iters=iters,
                                         seed=seed, jobs=jobs).items() if v is not None}
    if overrides:
        cfg = SamplerConfig(**{**cfg.to_config(), **overrides})
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    tasks = [(model, cfg, s) for s in seqs]
    n_jobs = max(1, min(cfg.jobs, cfg.chains, os.cpu_count() or 1))
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run_chain_safe, tasks))
    else:
        results = [_run_chain_safe(t) for t in tasks]

    failures = [r for r in results if isinstance(r, InitializationError)]
    if len(failures) == len(results):
        raise InitializationError(
            "all chains failed to initialize",
            dump={"chains": cfg.chains, "per_chain": [f.dump for f in failures]},
        )
    if failures:
        # a partially initialized run is still a failure: chains must be comparable
        raise InitializationError(
            f"{len(failures)} of {cfg.chains} chains failed to initialize",
            dump={"per_chain": [f.dump for f in failures]},
        )
    unconstrained = np.stack([r[0] for r in results])
    logp = np.stack([r[1] for r in results])
    stats = [r[2] for r in results]
    if hasattr(model, "constrain"):
        flat = unconstrained.reshape(-1, unconstrained.shape[-1])
        first = np.asarray(model.constrain(flat[0]))
        cons = np.empty((flat.shape[0], first.size))
        for i, x in enumerate(flat):
            cons[i] = model.constrain(x)
        draws = cons.reshape(unconstrained.shape[0], unconstrained.shape[1], -1)
    else:
        draws = unconstrained.copy()
    names = getattr(model, "constrained_names", None)
    if callable(names):
        names = names()
    if names is not None:
        names = list(names)
    else:
        names = [f"x[{i}]" for i in range(draws.shape[-1])]
    return PosteriorDraws(draws, names, unconstrained, logp, stats, cfg)
