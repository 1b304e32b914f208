import numpy as np
import pytest

from rtsmooth.diagnostics import diagnose, ess_bulk, split_rhat


def test_constant_chains_are_degenerate():
    x = np.ones((4, 500))
    assert np.isnan(split_rhat(x))
    report = diagnose(np.stack([x, np.random.default_rng(0).normal(size=(4, 500))], axis=-1), ["c", "z"])
    assert report.degenerate == ["c"]
    assert "c" in report.failing and not report.passed


def test_iid_draws():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 1000))
    assert abs(split_rhat(x) - 1.0) < 0.01
    assert ess_bulk(x) == pytest.approx(4000, rel=0.2)


def test_ar1_ess_matches_theory():
    # AR(1) with coefficient phi has ESS ~ N (1 - phi) / (1 + phi)
    rng = np.random.default_rng(2)
    phi, n = 0.8, 5000
    x = np.empty((4, n))
    x[:, 0] = rng.normal(size=4) / np.sqrt(1 - phi**2)
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + rng.normal(size=4)
    assert ess_bulk(x) == pytest.approx(4 * n * (1 - phi) / (1 + phi), rel=0.2)


def test_trending_chains_fail():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 500)) + np.linspace(0, 3, 500)
    assert split_rhat(x) > 1.05
    assert not diagnose(x[:, :, None]).passed


def test_shifted_chain_fails():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 500))
    x[0] += 2.0
    assert split_rhat(x) > 1.05


def test_report_thresholds_and_dict():
    rng = np.random.default_rng(5)
    report = diagnose(rng.normal(size=(4, 1000, 3)), divergences=[0, 1, 0, 0])
    d = report.to_dict()
    assert d["passed"] and d["max_rhat"] < 1.05 and d["min_ess"] > 250
    assert d["divergences"] == [0, 1, 0, 0]


def test_short_run_rejected():
    with pytest.raises(ValueError):
        diagnose(np.zeros((1, 500)))
