import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rtsmooth.errors import EmptySampleError, InvalidParameterError, ValidationError
from rtsmooth.timeseries import (
    CaseSeries,
    DiscretizedPMF,
    discretize_gamma,
    read_case_csv,
    weighted_quantile,
    write_case_csv,
)


def gamma_bin_mass(mean, sd, a, b):
    # oracle: integrate the density rather than differencing the CDF
    shape, rate = (mean / sd) ** 2, mean / sd**2
    pdf = stats.gamma(shape, scale=1 / rate).pdf
    return integrate.quad(pdf, a, b, limit=200)[0]


def test_generation_pmf_short_mean_puts_mass_in_first_week():
    p = discretize_gamma(4.6, 1.2, step=7, max_lags=3, kind="generation")
    assert p.probs[0] == 0.0
    assert p.probs[1] > 0.99
    assert p.probs.sum() == pytest.approx(1.0)
    # oracle: bins 1..3 renormalized after dropping bin 0
    raw = np.array([gamma_bin_mass(4.6, 1.2, 7 * k, 7 * (k + 1)) for k in range(1, 4)])
    np.testing.assert_allclose(p.probs[1:], raw / raw.sum(), atol=1e-9)


def test_delay_pmf_matches_integrated_density():
    p = discretize_gamma(5.5, 2.5, max_lags=4)
    raw = np.array([gamma_bin_mass(5.5, 2.5, 7 * k, 7 * (k + 1)) for k in range(5)])
    np.testing.assert_allclose(p.probs, raw / raw.sum(), atol=1e-9)


def test_exponential_case_has_geometric_bins():
    p = discretize_gamma(10.0, 10.0, step=7, max_lags=8)
    ratios = p.probs[1:] / p.probs[:-1]
    np.testing.assert_allclose(ratios, np.exp(-7 / 10.0), rtol=1e-9)


def test_delay_keeps_lag_zero_mass():
    gen = discretize_gamma(4.6, 1.2, max_lags=3, kind="generation")
    delay = discretize_gamma(4.6, 1.2, max_lags=3, kind="delay")
    assert gen.probs[0] == 0.0 and delay.probs[0] > 0.0


def test_timedelta_step_and_default_max_lags():
    p = discretize_gamma(5.5, 2.5, step=dt.timedelta(days=7))
    assert p.probs.sum() == pytest.approx(1.0)
    assert 1 <= p.max_lag <= 5


@pytest.mark.parametrize("mean,sd", [(0, 1), (1, 0), (-1, 1), (np.nan, 1)])
def test_discretize_gamma_rejects_bad_moments(mean, sd):
    with pytest.raises(InvalidParameterError):
        discretize_gamma(mean, sd)


def test_generation_pmf_must_have_zero_lag_zero():
    with pytest.raises(InvalidParameterError):
        DiscretizedPMF([0.2, 0.8], "generation")
    with pytest.raises(InvalidParameterError):
        DiscretizedPMF([1.0], "generation")
    with pytest.raises(InvalidParameterError):
        DiscretizedPMF([0.5, -0.1], "delay")


def test_pmf_is_normalized_and_read_only():
    p = DiscretizedPMF([0, 2, 2], "generation")
    np.testing.assert_array_equal(p.probs, [0, 0.5, 0.5])
    with pytest.raises(ValueError):
        p.probs[1] = 1.0


def test_weighted_quantile_examples():
    assert weighted_quantile([1, 2, 3, 4, 5], 0.5) == 3
    # type 7: h = (n-1) q = 0.975, so 0 + 0.975 * (10 - 0)
    assert weighted_quantile([0, 10], 0.975) == pytest.approx(9.75)
    assert weighted_quantile([2.5] * 7, 0.13) == 2.5
    with pytest.raises(EmptySampleError):
        weighted_quantile([], 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0, 1))
def test_weighted_quantile_agrees_with_numpy_linear(xs, q):
    assert weighted_quantile(xs, q) == pytest.approx(np.quantile(xs, q, method="linear"), abs=1e-6)


def test_case_series_validation():
    with pytest.raises(ValidationError):
        CaseSeries([1, -2, 3])
    with pytest.raises(ValidationError):
        CaseSeries([1.5, 2])
    with pytest.raises(ValidationError):
        CaseSeries([4])
    s = CaseSeries([3, 4, 5, 6])
    assert s.truncate(2).counts.tolist() == [3, 4]
    with pytest.raises(InvalidParameterError):
        s.truncate(5)


def test_case_csv_round_trip(tmp_path):
    s = CaseSeries([0, 12, 30, 7], start_date=dt.date(2020, 11, 2))
    write_case_csv(s, tmp_path / "c.csv")
    back = read_case_csv(tmp_path / "c.csv")
    assert back.counts.tolist() == [0, 12, 30, 7]
    assert back.start_date == dt.date(2020, 11, 2)


def test_case_csv_rejects_gaps(tmp_path):
    f = tmp_path / "gap.csv"
    f.write_text("date,cases\n2020-01-01,1\n2020-01-08,2\n2020-01-22,3\n")
    with pytest.raises(ValidationError, match="consecutive"):
        read_case_csv(f)
    f.write_text("day,count\n2020-01-01,1\n")
    with pytest.raises(ValidationError, match="header"):
        read_case_csv(f)
