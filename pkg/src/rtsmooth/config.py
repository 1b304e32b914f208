"""
Run configuration: a nested YAML document with ``data``, ``model``,
``sampler``, ``scenario``, ``benchmark`` and ``output`` sections.

Every section is optional except where a command needs it; missing
hyperprior entries fall back to the simulation-study defaults. The resolved
configuration (``RunConfig.to_config``) is what gets written to run
manifests, and loading it back reproduces the run.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, RtSmoothError
from .model import ModelSpec
from .renewal import HyperPriorSpec
from .sampler import SamplerConfig
from .seirs import DEFAULT_DT, SeirsParams, weekly_kernels
from .timeseries import DiscretizedPMF, discretize_gamma

SECTIONS = ("seed", "data", "model", "sampler", "scenario", "benchmark", "output")


def load_yaml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def pmf_from_config(cfg, kind: str, key: str, scenario: SeirsParams | None = None) -> DiscretizedPMF:
    """Build a weekly PMF from one ``model.generation`` / ``model.delay`` entry.

    Accepted forms::

        {pmf: [0, 0.6, 0.3, 0.1]}               # explicit weekly masses
        {family: gamma, mean_days: 4.6, sd_days: 1.2, max_lags: 4}
        {family: seirs}                         # matched to the scenario rates
    """
    if cfg is None:
        raise ConfigError(f"missing required config key {key!r}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{key} must be a mapping")
    try:
        if "pmf" in cfg:
            return DiscretizedPMF(list(cfg["pmf"]), kind)
        family = str(cfg.get("family", "")).lower()
        if family == "gamma":
            for name in ("mean_days", "sd_days"):
                if name not in cfg:
                    raise ConfigError(f"missing required config key '{key}.{name}'")
            return discretize_gamma(cfg["mean_days"], cfg["sd_days"], step=cfg.get("step_days", 7.0),
                                    max_lags=cfg.get("max_lags"), kind=kind)
        if family == "seirs":
            gen, delay = weekly_kernels(scenario or SeirsParams())
            return gen if kind == "generation" else delay
    except RtSmoothError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: give either 'pmf' or 'family' (gamma or seirs)")


def spec_from_config(cfg: dict, scenario: SeirsParams | None = None, prior: str | None = None) -> ModelSpec:
    """ModelSpec from the ``model`` section; ``prior`` overrides ``model.prior``."""
    cfg = dict(cfg or {})
    unknown = set(cfg) - {"prior", "priors", "generation", "delay", "hyper", "seed_weeks", "ell_ref"}
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    kind = prior or cfg.get("prior")
    if kind is None:
        raise ConfigError("missing required config key 'model.prior'")
    gen = pmf_from_config(cfg.get("generation"), "generation", "model.generation", scenario)
    delay = pmf_from_config(cfg.get("delay"), "delay", "model.delay", scenario)
    try:
        hyper = HyperPriorSpec.from_config(cfg.get("hyper"))
    except (RtSmoothError, TypeError) as exc:
        raise ConfigError(f"model.hyper: {exc}") from exc
    return ModelSpec(kind, gen, delay, hyper, cfg.get("seed_weeks"), cfg.get("ell_ref"))


@dataclass
class RunConfig:
    """Parsed configuration shared by every subcommand.

    The raw sections are kept verbatim so the manifest can echo them.
    """

    seed: int | None = None
    data: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, source=None) -> "RunConfig":
        doc = copy.deepcopy(doc or {})
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for name in SECTIONS[1:]:
            if doc.get(name) is not None and not isinstance(doc[name], dict):
                raise ConfigError(f"config section {name!r} must be a mapping")
        return cls(seed=doc.get("seed"), source=None if source is None else str(source),
                   **{k: doc.get(k) or {} for k in SECTIONS[1:]})

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(load_yaml(path), source=path)

    def to_config(self) -> dict:
        out = {"seed": self.seed}
        for name in SECTIONS[1:]:
            value = getattr(self, name)
            if value:
                out[name] = copy.deepcopy(value)
        return out

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_config(), sort_keys=False))

    # ------------------------------------------------------------ resolved views

    def seirs_params(self) -> SeirsParams:
        cfg = {k: v for k, v in self.scenario.items() if k not in ("rho", "kappa", "dt")}
        return SeirsParams.from_config(cfg)

    def observation(self) -> dict:
        """Ascertainment, overdispersion and step of the simulated observation process."""
        try:
            out = {"rho": float(self.scenario.get("rho", 0.05)),
                   "kappa": float(self.scenario.get("kappa", 5.0)),
                   "dt": float(self.scenario.get("dt", DEFAULT_DT))}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario: {exc}") from exc
        if not 0 < out["rho"] <= 1 or out["kappa"] <= 0 or out["dt"] <= 0:
            raise ConfigError("scenario needs 0 < rho <= 1, kappa > 0 and dt > 0")
        return out

    def sampler_config(self, seed=None, jobs=None) -> SamplerConfig:
        overrides = {}
        if seed is not None:
            overrides["seed"] = int(seed)
        elif self.seed is not None and "seed" not in self.sampler:
            overrides["seed"] = int(self.seed)
        if jobs is not None:
            overrides["jobs"] = int(jobs)
        try:
            return SamplerConfig.from_config(self.sampler, **overrides)
        except (RtSmoothError, TypeError) as exc:
            raise ConfigError(f"sampler: {exc}") from exc

    def model_spec(self, prior=None) -> ModelSpec:
        scenario = self.seirs_params() if self.scenario else None
        return spec_from_config(self.model, scenario, prior)

    def priors(self, override=None) -> list:
        """Prior kinds to run: ``override`` (comma separated) or ``model.priors`` or ``model.prior``."""
        if override:
            kinds = [k.strip() for k in str(override).split(",") if k.strip()]
        else:
            kinds = self.model.get("priors") or [self.model.get("prior")]
        if not kinds or kinds == [None]:
            raise ConfigError("missing required config key 'model.prior'")
        return [str(k).lower() for k in kinds]
