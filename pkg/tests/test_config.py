import pytest
import yaml

from rtsmooth.config import RunConfig, pmf_from_config, spec_from_config
from rtsmooth.errors import ConfigError
from rtsmooth.seirs import DEFAULT_DT, SeirsParams

GAMMA = {"family": "gamma", "mean_days": 4.6, "sd_days": 1.2}


def test_pmf_forms():
    explicit = pmf_from_config({"pmf": [0, 0.7, 0.3]}, "generation", "model.generation")
    assert list(explicit.probs) == [0, 0.7, 0.3]
    gamma = pmf_from_config(GAMMA, "generation", "model.generation")
    assert gamma.probs[0] == 0 and gamma.probs.sum() == pytest.approx(1.0)
    seirs = pmf_from_config({"family": "seirs"}, "delay", "model.delay", SeirsParams())
    assert seirs.probs[0] == pytest.approx(0.528, abs=1e-3)


def test_missing_keys_are_named():
    with pytest.raises(ConfigError, match="model.generation"):
        spec_from_config({"prior": "rw1", "delay": GAMMA})
    with pytest.raises(ConfigError, match="model.delay.sd_days"):
        spec_from_config({"prior": "rw1", "generation": GAMMA, "delay": {"family": "gamma", "mean_days": 5}})
    with pytest.raises(ConfigError, match="model.prior"):
        spec_from_config({"generation": GAMMA, "delay": GAMMA})


def test_invalid_entries():
    with pytest.raises(ConfigError):
        pmf_from_config({"family": "weibull"}, "delay", "model.delay")
    with pytest.raises(ConfigError):
        pmf_from_config({"pmf": [0.5, -0.5]}, "delay", "model.delay")
    with pytest.raises(ConfigError):
        spec_from_config({"prior": "rw1", "generation": GAMMA, "delay": GAMMA, "colour": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"sampler": 3})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"extra": {}})


def test_hyperprior_override():
    spec = spec_from_config({"prior": "ou", "generation": GAMMA, "delay": GAMMA,
                             "hyper": {"kappa": {"family": "exponential", "rate": 0.1}}})
    assert spec.hyper.kappa.family == "exponential"


def test_run_config_round_trip(tmp_path):
    doc = {"seed": 3, "model": {"prior": "ibm", "generation": GAMMA, "delay": GAMMA},
           "sampler": {"chains": 2, "warmup": 100, "iters": 300}, "scenario": {"horizon": 20, "rho": 0.1}}
    cfg = RunConfig.from_dict(doc)
    cfg.dump(tmp_path / "c.yaml")
    again = RunConfig.load(tmp_path / "c.yaml")
    assert again.to_config() == cfg.to_config() == doc
    assert again.sampler_config().seed == 3
    assert again.sampler_config(seed=9, jobs=2).seed == 9
    assert again.seirs_params().horizon == 20
    assert again.observation() == {"rho": 0.1, "kappa": 5.0, "dt": DEFAULT_DT}
    assert again.priors() == ["ibm"] and again.priors("rw1, ou") == ["rw1", "ou"]


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text(yaml.safe_dump([1, 2]))
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "list.yaml")


def test_observation_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scenario": {"rho": 2.0}}).observation()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scenario": {"gamma_I": -1.0}}).seirs_params()
