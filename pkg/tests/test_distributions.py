import numpy as np
import pytest
from scipy import stats

from sparsepanel.distributions import (
    InverseGammaSpec,
    InverseWishartSpec,
    MatrixDomainError,
    ParameterDomainError,
    TruncatedNormalSpec,
    ig_spec_from_variance,
    log_density,
    sample_bernoulli,
    sample_beta,
    sample_inverse_gamma,
    sample_inverse_wishart,
    sample_mv_normal,
    sample_truncated_normal,
)
from sparsepanel.rng import RngStream


def test_inverse_gamma_spec_moments():
    spec = InverseGammaSpec(nu=12.0, tau=10.0)
    assert spec.mean == pytest.approx(1.0)
    assert spec.variance == pytest.approx(0.25)
    spec = InverseGammaSpec(nu=6.0, tau=4.0)
    assert spec.mean == pytest.approx(1.0)
    assert spec.variance == pytest.approx(1.0)
    spec = InverseGammaSpec(nu=6.0, tau=0.2)
    assert spec.mean == pytest.approx(0.05)
    assert np.sqrt(spec.variance) == pytest.approx(0.05)


def test_inverse_gamma_spec_domain():
    with pytest.raises(ParameterDomainError):
        InverseGammaSpec(nu=-1.0, tau=1.0)
    with pytest.raises(ParameterDomainError):
        InverseGammaSpec(nu=2.0, tau=1.0).mean
    with pytest.raises(ParameterDomainError):
        InverseGammaSpec(nu=4.0, tau=1.0).variance


def test_ig_spec_from_variance_identities():
    assert ig_spec_from_variance(1.0) == InverseGammaSpec(nu=6.0, tau=4.0)
    assert ig_spec_from_variance(0.5) == InverseGammaSpec(nu=8.0, tau=6.0)
    assert ig_spec_from_variance(2.0) == InverseGammaSpec(nu=5.0, tau=3.0)


@pytest.mark.parametrize("v", np.geomspace(0.01, 100.0, 9).tolist())
def test_ig_spec_from_variance_moments(v):
    spec = ig_spec_from_variance(v)
    assert spec.mean == pytest.approx(1.0, rel=1e-12)
    assert spec.variance == pytest.approx(v, rel=1e-12)


def test_sample_inverse_gamma_mc_moments():
    spec = InverseGammaSpec(nu=6.0, tau=0.2)
    draws = sample_inverse_gamma(spec, RngStream(7, 0), size=400_000)
    stderr = np.std(draws) / np.sqrt(draws.size)
    assert abs(np.mean(draws) - 0.05) < 3.0 * stderr


def test_sample_inverse_gamma_ks():
    spec = InverseGammaSpec(nu=12.0, tau=10.0)
    draws = sample_inverse_gamma(spec, RngStream(11, 0), size=1_000_000)
    stat = stats.kstest(draws, stats.invgamma(a=6.0, scale=5.0).cdf).statistic
    assert stat < 0.005


def test_sample_beta_ks():
    draws = sample_beta(2.5, 1.5, RngStream(3, 0), size=1_000_000)
    stat = stats.kstest(draws, stats.beta(2.5, 1.5).cdf).statistic
    assert stat < 0.005


def test_sample_beta_uniform_case():
    draws = sample_beta(1.0, 1.0, RngStream(3, 1), size=200_000)
    assert np.mean(draws) == pytest.approx(0.5, abs=0.005)


def test_sample_bernoulli_degenerate_and_rate():
    rng = RngStream(5, 0)
    assert np.all(sample_bernoulli(np.zeros(100), rng) == 0)
    assert np.all(sample_bernoulli(np.ones(100), rng) == 1)
    draws = sample_bernoulli(np.full(200_000, 0.3), rng)
    assert np.mean(draws) == pytest.approx(0.3, abs=0.005)
    with pytest.raises(ParameterDomainError):
        sample_bernoulli(1.5, rng)


def test_sample_mv_normal_moments():
    mean = np.array([1.0, -2.0])
    cov = np.array([[2.0, 0.6], [0.6, 0.5]])
    draws = sample_mv_normal(mean, cov, RngStream(9, 0), size=500_000)
    assert np.allclose(draws.mean(axis=0), mean, atol=0.01)
    assert np.allclose(np.cov(draws.T), cov, atol=0.02)


def test_sample_mv_normal_degenerate():
    mean = np.array([3.0, -1.0])
    out = sample_mv_normal(mean, np.zeros((2, 2)), RngStream(9, 1))
    assert np.array_equal(out, mean)
    out = sample_mv_normal(mean, np.zeros((2, 2)), RngStream(9, 1), size=4)
    assert out.shape == (4, 2)
    assert np.all(out == mean)


def test_sample_mv_normal_near_singular_jitter():
    # Rank-1 plus tiny noise: plain Cholesky can fail, jitter path must not.
    u = np.array([1.0, 2.0, 3.0])
    cov = np.outer(u, u)
    draw = sample_mv_normal(np.zeros(3), cov, RngStream(9, 2))
    assert np.all(np.isfinite(draw))


def test_sample_mv_normal_shape_mismatch():
    with pytest.raises(MatrixDomainError):
        sample_mv_normal(np.zeros(2), np.eye(3), RngStream(9, 3))


def test_sample_inverse_wishart_mean():
    spec = InverseWishartSpec(dof=5.05, scale=np.diag([0.5, 0.1]))
    expected = spec.scale / (5.05 - 3.0)
    draws = sample_inverse_wishart(spec, RngStream(13, 0), size=200_000)
    assert np.allclose(draws.mean(axis=0), expected, atol=0.01)
    single = sample_inverse_wishart(spec, RngStream(13, 1))
    assert single.shape == (2, 2)
    np.linalg.cholesky(single)  # SPD


def test_inverse_wishart_spec_domain():
    with pytest.raises(ParameterDomainError):
        InverseWishartSpec(dof=0.5, scale=np.eye(2))
    with pytest.raises(MatrixDomainError):
        InverseWishartSpec(dof=5.0, scale=np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sample_truncated_normal_support_and_ks():
    spec = TruncatedNormalSpec(center=0.5, lower_bound=0.0, scale=2.0)
    draws = sample_truncated_normal(spec, RngStream(17, 0), size=1_000_000)
    assert np.all(draws > 0.0)
    ref = stats.truncnorm(a=(0.0 - 0.5) / 2.0, b=np.inf, loc=0.5, scale=2.0)
    assert stats.kstest(draws, ref.cdf).statistic < 0.005


def test_log_density_values():
    assert log_density("normal", (0.0, 1.0), 0.0) == pytest.approx(-0.9189385332046727)
    spec = InverseGammaSpec(nu=6.0, tau=4.0)
    assert log_density("inverse_gamma", spec, 1.0) == pytest.approx(
        stats.invgamma(a=3.0, scale=2.0).logpdf(1.0)
    )
    assert log_density("inverse_gamma", spec, -1.0) == -np.inf
    assert log_density("beta", (2.0, 3.0), 0.5) == pytest.approx(stats.beta(2, 3).logpdf(0.5))
    assert log_density("beta", (2.0, 3.0), 1.5) == -np.inf
    tn = TruncatedNormalSpec(center=0.5, lower_bound=0.0, scale=2.0)
    ref = stats.truncnorm(a=-0.25, b=np.inf, loc=0.5, scale=2.0)
    assert log_density("truncated_normal", tn, 1.3) == pytest.approx(ref.logpdf(1.3))
    assert log_density("truncated_normal", tn, -0.1) == -np.inf
    iw = InverseWishartSpec(dof=5.0, scale=np.eye(2))
    assert log_density("inverse_wishart", iw, np.eye(2)) == pytest.approx(
        stats.invwishart(df=5.0, scale=np.eye(2)).logpdf(np.eye(2))
    )
    with pytest.raises(ParameterDomainError):
        log_density("gamma", (1.0, 1.0), 1.0)


def test_reproducibility_bit_identical():
    a = sample_inverse_gamma(InverseGammaSpec(6.0, 4.0), RngStream(42, 3), size=100)
    b = sample_inverse_gamma(InverseGammaSpec(6.0, 4.0), RngStream(42, 3), size=100)
    assert np.array_equal(a, b)
    c = sample_inverse_gamma(InverseGammaSpec(6.0, 4.0), RngStream(42, 4), size=100)
    assert not np.array_equal(a, c)
