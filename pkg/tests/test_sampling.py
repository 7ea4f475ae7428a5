import numpy as np
import pytest

from predcal.core import MixedModelData, ParameterRangeError, RandomStream
from predcal.design import build_design_matrices, parse_formula
from predcal.sampling import (
    OverdispersionParams,
    beta_variates,
    sample_beta_binomial,
    sample_lmm,
    sample_lmm_single,
    sample_quasi_binomial,
    sample_quasi_poisson,
)


def test_beta_binomial_draw_in_range(rng):
    y = sample_beta_binomial([50] * 10, 0.1, 0.06, rng)
    assert y.shape == (10,) and np.all((y >= 0) & (y <= 50))


def test_quasi_binomial_mixed_sizes(rng):
    sizes = [40, 50, 60]
    y = sample_quasi_binomial(sizes, 0.1, 3.0, rng)
    assert np.all((y >= 0) & (y <= np.array(sizes)))


def test_parameter_ranges(rng):
    with pytest.raises(ParameterRangeError):
        sample_beta_binomial([10], 0.1, 0.0, rng)
    with pytest.raises(ParameterRangeError):
        sample_beta_binomial([10], 1.0, 0.1, rng)
    with pytest.raises(ParameterRangeError):
        sample_quasi_binomial([10, 2], 0.1, 3.0, rng)
    with pytest.raises(ParameterRangeError):
        sample_quasi_binomial([10], 0.1, 1.0, rng)
    with pytest.raises(ParameterRangeError):
        sample_quasi_poisson(5, 3.0, 0.5, rng)
    with pytest.raises(ParameterRangeError):
        sample_quasi_poisson(5, 0.0, 2.0, rng)


def test_floors_used_only_on_request(rng):
    # a fitted phi of exactly 1 is legal inside the bootstrap
    y = sample_quasi_poisson(4, 3.0, 1.0, rng, allow_floor=True)
    assert y.shape == (4,)
    y = sample_quasi_binomial([1, 5, 10], 0.3, 12.0, rng, allow_floor=True)
    assert y[0] in (0, 1)
    y = sample_beta_binomial([5], 0.3, 0.0, rng, allow_floor=True)
    assert 0 <= y[0] <= 5


def test_mixture_parameters():
    p = OverdispersionParams.beta_binomial(0.2, 0.1)
    assert 1 / (1 + p.a + p.b) == pytest.approx(0.1)
    assert p.a / (p.a + p.b) == pytest.approx(0.2)
    q = OverdispersionParams.quasi_poisson(5.0, 3.0)
    assert q.a / q.b == pytest.approx(5.0)
    assert 5.0 + 5.0**2 / q.a == pytest.approx(15.0)


def test_beta_variates_mean(rng):
    x = beta_variates(np.full(200_000, 2.0), np.full(200_000, 6.0), rng)
    assert x.mean() == pytest.approx(0.25, abs=3e-3)
    assert np.all((x >= 0) & (x <= 1))


def test_same_stream_same_draws():
    a = sample_quasi_poisson(20, 5.0, 2.0, RandomStream(9).derive(2).generator())
    b = sample_quasi_poisson(20, 5.0, 2.0, RandomStream(9).derive(2).generator())
    assert np.array_equal(a, b)


def test_lmm_sample_shapes_and_errors(rng):
    data = MixedModelData(np.zeros(4), {"a": ("1", "1", "2", "2")})
    dm = build_design_matrices(data, parse_formula("y~(1|a)"))
    y = sample_lmm(10.0, [1.0, 0.0], dm, rng)
    # no residual variance: rows sharing a level are equal
    assert y[0] == y[1] and y[2] == y[3]
    with pytest.raises(Exception):
        sample_lmm(10.0, [1.0], dm, rng)
    with pytest.raises(ParameterRangeError):
        sample_lmm(10.0, [-1.0, 1.0], dm, rng)


def test_lmm_single_variance():
    rng = np.random.default_rng(3)
    y = np.array([sample_lmm_single(5.0, [1.0, 2.0, 3.0], rng) for _ in range(40_000)])
    assert y.mean() == pytest.approx(5.0, abs=0.05)
    assert y.var() == pytest.approx(6.0, rel=0.04)


def test_floored_rho_size_one_is_bernoulli():
    rng = np.random.default_rng(21)
    y = sample_beta_binomial(np.ones(100_000, int), 0.5, 1e-9, rng)
    assert set(np.unique(y)) <= {0, 1}
    assert y.mean() == pytest.approx(0.5, abs=0.01)


def test_floored_phi_collapses_to_poisson():
    rng = np.random.default_rng(22)
    y = sample_quasi_poisson(100_000, 5.0, 1 + 1e-9, rng)
    assert y.var() / y.mean() == pytest.approx(1.0, abs=0.03)


def test_zero_variance_gives_mean(rng):
    from predcal.datasets import C2_FORMULA, as_mixed, c2_dat1

    dm = build_design_matrices(as_mixed(c2_dat1()), parse_formula(C2_FORMULA))
    assert np.all(sample_lmm(100.0, [0, 0, 0, 0], dm, rng) == 100.0)


def test_shared_factor_covariance():
    from predcal.datasets import C2_FORMULA, as_mixed, c2_dat1

    dm = build_design_matrices(as_mixed(c2_dat1()), parse_formula(C2_FORMULA))
    rng = np.random.default_rng(23)
    Y = np.array([sample_lmm(100.0, [4, 0, 0, 1], dm, rng) for _ in range(10_000)])
    a, b = dm.codes()[0], dm.codes()[1]
    # rows 0 and 9: same level of a, different b
    assert a[0] == a[9] and b[0] != b[9]
    assert np.cov(Y[:, 0], Y[:, 9])[0, 1] == pytest.approx(4.0, abs=0.2)
    assert Y[:, 0].var() == pytest.approx(5.0, abs=0.2)


def test_explicit_design_with_single_level_factor(rng):
    from predcal.datasets import c2_dat4_futmat

    y = sample_lmm(100.0, [1, 1, 1, 1], c2_dat4_futmat(), rng)
    assert y.shape == (6,) and np.all(np.isfinite(y))
