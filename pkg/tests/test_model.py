import math

import numpy as np
import pytest
from scipy import optimize

from rtsmooth.errors import ConfigError, InvalidParameterError
from rtsmooth.model import ModelSpec, RenewalModel, log_posterior
from rtsmooth.renewal import LatentIncidence, NuisanceParams, loglik_incidence, simulate_renewal
from rtsmooth.timeseries import DiscretizedPMF, discretize_gamma

from oracles import log_posterior_oracle

KINDS = ("rw1", "ou", "rw2", "ibm", "hsgp")
GEN = discretize_gamma(11.5, 8.5, kind="generation")
DELAY = discretize_gamma(4.0, 4.0)


@pytest.fixture(scope="module")
def cases12():
    R = np.exp(0.3 * np.sin(np.arange(12) / 3))
    cases, _ = simulate_renewal(R, GEN, DELAY, NuisanceParams(0.05, 20, 0.5, 100), seed=2)
    return cases


@pytest.mark.parametrize("kind", KINDS)
def test_log_posterior_matches_scipy_oracle(kind, cases12):
    model = RenewalModel(ModelSpec(kind, GEN, DELAY), cases12)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = model.random_point(rng)
        assert model.log_posterior(x) == pytest.approx(log_posterior_oracle(model, x), rel=1e-8, abs=1e-7)


@pytest.mark.parametrize("kind", KINDS)
def test_terms_sum_to_log_posterior(kind, cases12):
    model = RenewalModel(ModelSpec(kind, GEN, DELAY), cases12)
    x = model.random_point(np.random.default_rng(2))
    assert sum(model.terms(x).values()) == pytest.approx(model.log_posterior(x), abs=1e-8)


def test_jacobian_shift_per_log_coordinate(cases12):
    # moving one log coordinate by delta shifts the Jacobian term by exactly delta
    model = RenewalModel(ModelSpec("rw1", GEN, DELAY), cases12)
    x = model.random_point(np.random.default_rng(3))
    delta = 0.37
    for name in ("log_rho", "log_kappa", "log_sigma"):
        y = x.copy()
        y[model.layout[name]] += delta
        assert model.terms(y)["jacobian"] - model.terms(x)["jacobian"] == pytest.approx(delta, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_no_observations_drops_only_the_observation_term(kind, cases12):
    full = RenewalModel(ModelSpec(kind, GEN, DELAY), cases12)
    empty = RenewalModel(ModelSpec(kind, GEN, DELAY), None, T=12)
    x = full.random_point(np.random.default_rng(4))
    t = full.terms(x)
    expected = t["incidence"] + t["gamma_prior"] + t["hyperprior"] + t["jacobian"]
    assert empty.terms(x)["obs"] == 0.0
    assert empty.log_posterior(x) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_matches_central_differences(kind, cases12):
    model = RenewalModel(ModelSpec(kind, GEN, DELAY), cases12)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        x = model.random_point(rng)
        _, grad = model.logp_and_grad(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = 1e-5
            fd = (model.log_posterior(x + e) - model.log_posterior(x - e)) / 2e-5
            if abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1.0) > 5e-6:
                # retry with Richardson extrapolation before declaring a mismatch
                h = 1e-4
                f1 = (model.log_posterior(x + e * 10) - model.log_posterior(x - e * 10)) / (2 * h)
                f2 = (model.log_posterior(x + e * 20) - model.log_posterior(x - e * 20)) / (4 * h)
                fd = (4 * f1 - f2) / 3
            worst = max(worst, abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1.0))
    assert worst < 1e-5


@pytest.mark.parametrize("kind", KINDS)
def test_log_posterior_finite_near_valid_point(kind, cases12):
    model = RenewalModel(ModelSpec(kind, GEN, DELAY), cases12)
    rng = np.random.default_rng(6)
    x = model.random_point(rng)
    for _ in range(50):
        assert np.isfinite(model.log_posterior(x + rng.normal(0, 0.05, x.size)))


def _incidence_mode(log_r, nu=3.0):
    seeds = np.full(GEN.max_lag + 1, 100.0)
    def negative(i1):
        inc = LatentIncidence(seeds, np.array([i1]))
        return -loglik_incidence(inc, np.array([log_r]), nu, 100.0, GEN)
    return optimize.minimize_scalar(negative, bounds=(1.0, 2000.0), method="bounded",
                                    options={"xatol": 1e-8}).x


def test_translating_log_r_scales_conditional_mean():
    # Gamma(R L nu, rate nu) has mode R L - 1/nu, so the mode moves as R L does
    nu, load = 3.0, 100.0 * GEN.probs[1:].sum()
    for log_r, c in ((0.0, 0.3), (0.2, -0.4)):
        m0, m1 = _incidence_mode(log_r, nu), _incidence_mode(log_r + c, nu)
        assert m0 == pytest.approx(math.exp(log_r) * load - 1 / nu, rel=1e-5)
        assert (m1 + 1 / nu) / (m0 + 1 / nu) == pytest.approx(math.exp(c), rel=1e-5)


def test_module_level_log_posterior(cases12):
    spec = ModelSpec("ibm", GEN, DELAY)
    model = RenewalModel(spec, cases12)
    block = model.block(model.random_point(np.random.default_rng(7)))
    assert log_posterior(block, cases12, spec) == model.log_posterior(block)
    empty = RenewalModel(spec, None, T=12)
    assert log_posterior(block, None, spec) == empty.log_posterior(block)
    with pytest.raises(InvalidParameterError):
        log_posterior(block, cases12, ModelSpec("rw1", GEN, DELAY))


def test_encode_decode_round_trip(cases12):
    model = RenewalModel(ModelSpec("ou", GEN, DELAY), cases12)
    x = model.random_point(np.random.default_rng(8))
    np.testing.assert_allclose(model.encode(model.decode(x)).unconstrained, x, atol=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec("rw3", GEN, DELAY)
    with pytest.raises(ConfigError):
        ModelSpec("rw1", GEN, DELAY, seed_weeks=GEN.max_lag - 1)
    with pytest.raises(ConfigError):
        ModelSpec("rw1", DiscretizedPMF([0.5, 0.5], "delay"), DELAY)
