import math

import numpy as np
import pytest

from rtsmooth.errors import ConfigError, InvalidParameterError
from rtsmooth.seirs import (
    DEFAULT_DT,
    BetaProfile,
    OutbreakTruth,
    SeirsParams,
    observe_cases,
    simulate_seirs,
    true_rt,
    weekly_kernels,
    write_truth_csv,
)
from rtsmooth.timeseries import CaseSeries

DAY = 1.0 / 7.0


def test_no_transmission_means_no_new_exposures():
    p = SeirsParams(beta=BetaProfile.constant(0.0), horizon=20)
    out = simulate_seirs(p, seed=1, dt=DAY, record_steps=True)
    assert np.all(out.steps[:, 1] == 0)  # E stays empty
    assert np.all(out.e2i == 0)
    assert out.I[-1] < out.I[0]


def test_conservation_at_every_step():
    p = SeirsParams()
    for seed in range(100):
        out = simulate_seirs(p, seed=seed, dt=DAY, record_steps=True)
        assert np.all(out.steps.sum(axis=1) == p.N)
        assert np.all(out.steps >= 0)


def test_conservation_at_default_step():
    out = simulate_seirs(SeirsParams(), seed=0, record_steps=True)
    assert out.steps.shape == (53 * round(1 / DEFAULT_DT) + 1, 4)
    assert np.all(out.steps.sum(axis=1) == 600_000)


def test_latent_exit_fraction():
    # one week of transmission fills E, then beta is zero; the E2I count of
    # the second week is then a pure exit count from the week-start E
    beta = BetaProfile((0.0, 0.99, 1.0, 2.0), (3.0, 3.0, 0.0, 0.0))
    p = SeirsParams(beta=beta, horizon=2, I0=500)
    frac = []
    for seed in range(1000):
        out = simulate_seirs(p, seed=seed, dt=1.0 / 70.0)
        frac.append(out.e2i[1] / out.E[1])
    frac = np.array(frac)
    expected = 1 - math.exp(-p.sigma_L)
    assert abs(frac.mean() - expected) < 3 * frac.std(ddof=1) / math.sqrt(frac.size)


def test_seed_determinism():
    p = SeirsParams()
    a, b = simulate_seirs(p, seed=4), simulate_seirs(p, seed=4)
    assert np.array_equal(a.e2i, b.e2i) and np.array_equal(a.S, b.S)
    assert not np.array_equal(a.e2i, simulate_seirs(p, seed=5).e2i)


def test_step_validation():
    with pytest.raises(InvalidParameterError):
        simulate_seirs(SeirsParams(), dt=0.5)
    with pytest.raises(InvalidParameterError):
        simulate_seirs(SeirsParams(), dt=1.0 / 7.5)


def test_params_validation():
    for kwargs in ({"N": 10, "I0": 20}, {"I0": 0}, {"gamma_I": 0.0}, {"horizon": 0}, {"omega": -1.0}):
        with pytest.raises(InvalidParameterError):
            SeirsParams(**kwargs)


def _truth(S, p, e2i=None):
    S = np.asarray(S)
    z = np.zeros_like(S)
    return OutbreakTruth(np.zeros(S.size, int) if e2i is None else e2i, np.empty(0), S, z, z, z, p, DAY)


def test_true_rt_examples():
    p = SeirsParams(beta=BetaProfile.constant(7.0 / 7.5), N=1000, I0=1)
    assert true_rt(_truth([1000], p))[0] == pytest.approx(1.0)
    assert true_rt(_truth([500], p))[0] == pytest.approx(0.5)
    r = true_rt(_truth([1000, 900, 700, 650], p))
    assert np.all(np.diff(r) < 0)
    q = SeirsParams(beta=BetaProfile.constant(2.0))
    out = simulate_seirs(q, seed=0, dt=DAY)
    assert out.true_rt[0] == pytest.approx(2.0 / q.gamma_I * (q.N - q.I0) / q.N)


def test_observe_zero_mean_is_zero():
    p = SeirsParams(N=1000, I0=1)
    cases = observe_cases(_truth(np.full(5, 1000), p, e2i=np.zeros(5, int)), seed=1)
    assert np.all(cases.counts == 0)


def test_observe_nb_dispersion():
    # mean rho * E2I = 100, so variance / mean = 1 + 100 / 5 = 21
    p = SeirsParams(N=10**6, I0=1)
    e2i = np.full(20000, 2000)
    c = observe_cases(_truth(np.full(e2i.size, 10**6), p, e2i=e2i), rho=0.05, kappa=5.0, seed=2).counts
    assert c.mean() == pytest.approx(100, rel=0.02)
    assert c.var(ddof=1) / c.mean() == pytest.approx(21, rel=0.05)
    c = observe_cases(_truth(np.full(e2i.size, 10**6), p, e2i=e2i), rho=0.05, kappa=1e8, seed=3).counts
    assert c.var(ddof=1) / c.mean() == pytest.approx(1, rel=0.05)


def test_observe_validation():
    p = SeirsParams(N=1000, I0=1)
    t = _truth(np.full(3, 1000), p)
    with pytest.raises(InvalidParameterError):
        observe_cases(t, rho=1.5)
    with pytest.raises(InvalidParameterError):
        observe_cases(t, kappa=0.0)


def test_default_scenario_sanity():
    p = SeirsParams()
    for seed in range(100):
        e2i = simulate_seirs(p, seed=seed).e2i
        peak = e2i.argmax()
        assert 0 < peak < p.horizon - 1
        assert e2i[-1] < 0.1 * e2i[peak]


def test_halving_the_step_barely_moves_mean_e2i():
    p = SeirsParams()
    n = 300
    a = np.mean([simulate_seirs(p, seed=s).e2i for s in range(n)], axis=0)
    b = np.mean([simulate_seirs(p, seed=10**6 + s, dt=DEFAULT_DT / 2).e2i for s in range(n)], axis=0)
    assert np.abs(a - b).sum() / b.sum() < 0.02


def test_one_day_step_is_visibly_biased():
    # the chain-binomial bias is first order in dt: one-day steps inflate the outbreak
    p = SeirsParams()
    day = np.mean([simulate_seirs(p, seed=s, dt=DAY).e2i.sum() for s in range(100)])
    fine = np.mean([simulate_seirs(p, seed=s).e2i.sum() for s in range(100)])
    assert day > 1.3 * fine


def test_beta_profile_interpolation():
    b = BetaProfile((0.0, 10.0), (1.0, 2.0))
    assert b(5.0) == pytest.approx(1.5)
    assert b(20.0) == pytest.approx(2.0)
    pchip = BetaProfile((0.0, 5.0, 10.0), (1.0, 2.0, 1.0), "pchip")
    assert pchip(5.0) == pytest.approx(2.0) and pchip(2.5) > 1.0
    with pytest.raises(InvalidParameterError):
        BetaProfile((0.0, 1.0), (1.0, -1.0))


def test_params_config_round_trip():
    p = SeirsParams(N=1000, I0=3, horizon=10, beta=BetaProfile.from_r0(((0, 1.2), (10, 0.8)), 7 / 7.5))
    q = SeirsParams.from_config(p.to_config())
    assert q == p
    with pytest.raises(ConfigError):
        SeirsParams.from_config({"Nn": 4})


def test_weekly_kernels():
    gen, delay = weekly_kernels()
    assert gen.probs[0] == 0.0 and gen.probs.sum() == pytest.approx(1.0)
    assert delay.probs.sum() == pytest.approx(1.0)
    # a 4-day exponential latent period seen through weekly bins
    assert delay.probs[0] == pytest.approx(0.528, abs=1e-3)
    # the kernel matches the growth-rate to R relation of the SEIR stages
    p = SeirsParams()
    for r in (-0.3, 0.0, 0.3):
        implied = 1.0 / np.sum(gen.probs * np.exp(-r * np.arange(gen.probs.size)))
        exact = (1 + r / p.sigma_L) * (1 + r / p.gamma_I)
        assert implied == pytest.approx(exact, rel=0.03)


def test_truth_csv(tmp_path):
    out = simulate_seirs(SeirsParams(horizon=5), seed=0, dt=DAY)
    out = out.with_cases(CaseSeries(np.arange(5)))
    write_truth_csv(out, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "week,S,E,I,R,e2i,true_rt,cases"
    assert len(lines) == 6 and lines[1].split(",")[0] == "1"
    assert float(lines[2].split(",")[6]) == out.true_rt[1]
