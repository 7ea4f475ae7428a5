import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predcal.core import ValidationError
from predcal.datasets import as_binomial, as_counts, qb_dat1, qp_dat1
from predcal.fitting import fit_beta_binomial, fit_quasi_binomial, fit_quasi_poisson
from predcal.intervals import (
    beta_binomial_intervals,
    interval_bounds,
    quasi_binomial_intervals,
    quasi_poisson_interval,
)

# brute-force plug-in values (see test_fitting for the estimator oracles)
QB_SE_50 = 4.591659104651971
BB_SE_50 = 5.764680161395672
QP_SE = 16.236413123319792


def test_quasi_poisson_rows():
    fit = fit_quasi_poisson(as_counts(qp_dat1()))
    rows = quasi_poisson_interval(fit, 3, 2.253848)
    assert len(rows) == 3
    r = rows[0]
    assert r.pred_se == pytest.approx(QP_SE, rel=1e-12)
    assert r.lower == pytest.approx(12.305592754831927, rel=1e-12)
    assert r.upper == pytest.approx(85.49440724516808, rel=1e-12)
    assert [x.m_index for x in rows] == [1, 2, 3]


def test_binomial_standard_errors():
    fit = fit_quasi_binomial(as_binomial(qb_dat1()))
    (row,) = quasi_binomial_intervals(fit, [50], 1.0)
    assert row.pred_se == pytest.approx(QB_SE_50, rel=1e-12)
    bb = fit_beta_binomial(as_binomial(qb_dat1()))
    (row,) = beta_binomial_intervals(bb, [50], 1.0)
    assert row.pred_se == pytest.approx(BB_SE_50, rel=1e-12)
    assert row.lower == pytest.approx(6.5 - BB_SE_50)


def test_binomial_clamp_and_flags():
    fit = fit_quasi_binomial(as_binomial(qb_dat1()))
    (row,) = quasi_binomial_intervals(fit, [50], 3.0)
    assert row.lower == 0.0 and row.lower_clamped and not row.upper_clamped
    (row,) = quasi_binomial_intervals(fit, [50], 3.0, "upper")
    assert row.lower == 0.0 and row.lower_clamped
    (row,) = quasi_binomial_intervals(fit, [50], 1.0, "lower")
    assert row.upper == 50.0 and row.upper_clamped


def test_negative_delta_rejected():
    fit = fit_quasi_poisson(as_counts(qp_dat1()))
    with pytest.raises(ValidationError):
        quasi_poisson_interval(fit, 1, -0.1)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=80, deadline=None)
@given(c=finite, se=st.floats(0, 100), d=st.floats(0, 10), k=st.floats(0, 5))
def test_half_width_linear_in_delta(c, se, d, k):
    lo, hi = interval_bounds(c, se, d, "both")
    lo2, hi2 = interval_bounds(c, se, k * d, "both")
    assert lo <= hi
    assert (lo + hi) / 2 == pytest.approx(c, abs=1e-9)
    assert hi2 - lo2 == pytest.approx(k * (hi - lo), rel=1e-9, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 200), p=st.floats(0.01, 0.99), se=st.floats(0, 50), d=st.floats(0, 10),
       alt=st.sampled_from(["both", "lower", "upper"]))
def test_binomial_bounds_inside_support(n, p, se, d, alt):
    lo, hi = interval_bounds(n * p, se, d, alt, 0.0, float(n))
    assert 0.0 <= lo <= hi <= n
