import math

import numpy as np
import pytest

from rtsmooth.errors import InitializationError, InvalidParameterError
from rtsmooth.sampler import DensityModel, SamplerConfig, grad_log_posterior, nuts_sample

from oracles import log_gamma_target, moment_errors, std_normal_target


@pytest.fixture(scope="module")
def normal_draws():
    return nuts_sample(std_normal_target(10), chains=4, warmup=1000, iters=3000, seed=12)


def test_standard_normal_moments(normal_draws):
    z = moment_errors(normal_draws.draws, np.zeros(10), np.ones(10))
    assert np.all(np.abs(z) < 3)
    assert normal_draws.diagnostics().rhat.mean() < 1.01


def test_transformed_gamma_moments():
    post = nuts_sample(log_gamma_target(), chains=4, warmup=1000, iters=3000, seed=21)
    z = moment_errors(post.draws, [1.5], [0.75])
    assert np.all(np.abs(z) < 3)
    assert post.names == ["x"] and np.all(post.draws > 0)


def test_retained_draw_count_and_shapes(normal_draws):
    assert normal_draws.draws.shape == (4, 2000, 10)
    assert normal_draws.logp.shape == (4, 2000)
    assert len(normal_draws.chain_stats) == 4


def test_same_seed_same_draws():
    a = nuts_sample(std_normal_target(3), chains=2, warmup=200, iters=400, seed=5)
    b = nuts_sample(std_normal_target(3), chains=2, warmup=200, iters=400, seed=5)
    c = nuts_sample(std_normal_target(3), chains=2, warmup=200, iters=400, seed=6)
    assert np.array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, c.draws)


def test_chains_differ_from_each_other():
    post = nuts_sample(std_normal_target(2), chains=2, warmup=100, iters=200, seed=1)
    assert not np.array_equal(post.draws[0], post.draws[1])


def test_initialization_failure_raises_with_dump():
    bad = DensityModel(lambda x: (-math.inf, np.zeros_like(x)), 2)
    with pytest.raises(InitializationError) as info:
        nuts_sample(bad, chains=2, warmup=10, iters=20, config=SamplerConfig(init_attempts=5))
    assert info.value.dump["chains"] == 2


def test_grad_log_posterior_maps_non_finite_to_minus_inf():
    bad = DensityModel(lambda x: (math.nan, np.zeros_like(x)), 2)
    value, grad = grad_log_posterior(np.zeros(2), bad)
    assert value == -math.inf and np.all(np.isnan(grad))
    value, grad = grad_log_posterior(np.ones(2), std_normal_target(2))
    assert value == -1.0 and np.array_equal(grad, -np.ones(2))


def test_leaving_the_support_counts_as_divergence():
    # a truncated normal: trajectories that cross the wall hit -inf
    def f(x):
        if np.any(np.abs(x) > 0.5):
            return -math.inf, np.full(x.size, np.nan)
        return -0.5 * float(x @ x), -x
    model = DensityModel(f, 2, init_radius=0.4)
    post = nuts_sample(model, chains=2, warmup=200, iters=700, seed=3)
    assert post.divergences.sum() > 0
    assert np.all(np.abs(post.draws) <= 0.5)


def test_config_validation_and_round_trip():
    with pytest.raises(InvalidParameterError):
        SamplerConfig(warmup=10, iters=10)
    with pytest.raises(InvalidParameterError):
        SamplerConfig.from_config({"chain": 4})
    cfg = SamplerConfig.from_config({"chains": 2, "divergence_threshold": 500}, seed=9)
    assert cfg.max_energy_error == 500 and cfg.seed == 9
    assert SamplerConfig(**cfg.to_config()) == cfg
