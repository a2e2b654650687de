from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctlab.grid import PeriodicGrid
from fluctlab.jobs import execute, resolve_params
from fluctlab.meanfield import gaussian_on_grid
from fluctlab.scenario import RngPlan
from fluctlab.statlab import (ProductTest, SmallnessViolation, cancelling_product, clt_result,
                              conditional_clt, cross_term_check, default_kappa, elln_campaign,
                              fit_power_law, increment_campaign, jackknife_covariance,
                              jackknife_variance, ks_critical_value, lemma_constants, log_bound,
                              log_mean_exp, marginal_kl, martingale_campaign, moment_campaign,
                              norm_sweep, sample_grid_density, spearman_trend)
from fluctlab.statlab.elln import bessel_l1
from fluctlab.statlab.increments import IncrementSample, increment_fit

from conftest import small_config


# -- regression and resampling ---------------------------------------------------------------


@given(st.floats(-3.0, 3.0), st.floats(0.1, 10.0))
@settings(max_examples=50, deadline=None)
def test_slope_recovery(slope, c):
    x = np.array([10.0, 20.0, 40.0, 80.0, 160.0])
    fit = fit_power_law(x, c * x**slope)
    assert fit.slope == pytest.approx(slope, abs=1e-10)
    se = 0.01 * c * x**slope
    assert fit_power_law(x, c * x**slope, se).slope == pytest.approx(slope, abs=1e-10)


def test_slope_needs_three_points():
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 1.0, 2.0], [1.0, 1.0, 2.0])


def test_weighted_fit_ci_covers_truth():
    rng = np.random.default_rng(0)
    x = np.array([100.0, 200.0, 400.0, 800.0])
    y = x**-1.0 * (1 + 0.02 * rng.standard_normal(4))
    fit = fit_power_law(x, y, 0.02 * x**-1.0)
    assert fit.ci[0] <= -1.0 <= fit.ci[1]


def test_jackknife_variance_equals_unbiased_variance():
    a = np.random.default_rng(1).standard_normal(200)
    v, se = jackknife_variance(a)
    assert float(v) == pytest.approx(a.var(ddof=1), rel=1e-12)
    assert se > 0
    b = a + np.random.default_rng(2).standard_normal(200)
    c, _ = jackknife_covariance(a, b)
    assert float(c) == pytest.approx(np.cov(a, b)[0, 1], rel=1e-12)


def test_spearman_trend():
    x = [1, 2, 3, 4]
    assert spearman_trend(x, [1.0, 2.0, 5.0, 9.0]) == pytest.approx(1.0)
    assert spearman_trend(x, [9.0, 5.0, 2.0, 1.0]) == pytest.approx(-1.0)
    assert spearman_trend(x, [3.0, 3.0, 3.0, 3.0]) == 0.0


@given(st.lists(st.floats(-1e-3, 1e-3), min_size=1, max_size=200))
@settings(max_examples=100, deadline=None)
def test_log_mean_exp_taylor_regime(h):
    h = np.array(h)
    direct = math.log(math.fsum(math.exp(v) for v in h) / h.size)
    est = float(log_mean_exp(h))
    assert abs(est - direct) <= 1e-4 * max(abs(direct), 1e-300) or abs(est - direct) <= 1e-15


def test_log_mean_exp_large_exponents():
    h = np.array([700.0, 710.0, 705.0])
    assert float(log_mean_exp(h)) == pytest.approx(710 + math.log((math.exp(-10) + 1 + math.exp(-5)) / 3))


# -- KS null distribution ----------------------------------------------------------------------


def _ks_cdf_exact(n: int, d: float) -> float:
    """P(D_n < d) by the Marsaglia-Tsang-Wang matrix formula in exact rational arithmetic."""
    nd = Fraction(d).limit_denominator(10**12) * n
    k = int(nd) + 1
    m = 2 * k - 1
    h = k - nd
    H = [[Fraction(1 if i - j + 1 >= 0 else 0) for j in range(m)] for i in range(m)]
    for i in range(m):
        H[i][0] -= h ** (i + 1)
        H[m - 1][i] -= h ** (m - i)
    if 2 * h - 1 > 0:
        H[m - 1][0] += (2 * h - 1) ** m
    for i in range(m):
        for j in range(m):
            if i - j + 1 > 0:
                H[i][j] /= math.factorial(i - j + 1)

    def mul(A, B):
        return [[sum(A[i][t] * B[t][j] for t in range(m)) for j in range(m)] for i in range(m)]

    P = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    for _ in range(n):
        P = mul(P, H)
    return float(P[k - 1][k - 1] * Fraction(math.factorial(n), n**n))


# two-sided critical values from the classical one-sample KS tables
KS_TABLE = {(5, 0.05): 0.563, (5, 0.01): 0.669, (10, 0.05): 0.409, (10, 0.01): 0.489}


@pytest.mark.parametrize("n,alpha", sorted(KS_TABLE))
def test_ks_critical_values(n, alpha):
    crit = ks_critical_value(n, alpha)
    assert round(crit, 3) == KS_TABLE[(n, alpha)]
    assert _ks_cdf_exact(n, crit) == pytest.approx(1 - alpha, abs=1e-6)


# -- exponential law of large numbers -------------------------------------------------------


def _uniform_sampler(n, rng):
    return rng.uniform(-1.0, 1.0, size=n)


def test_elln_zero_test_function():
    rep = elln_campaign(_uniform_sampler, ProductTest.zero(), 1.0, 2, [8, 64], 200, RngPlan(0), batches=10)
    assert np.all(rep.estimates == 0.0)


def test_lemma_constants_match_closed_form():
    a0, b0 = lemma_constants(0.01, 2)
    assert a0 == pytest.approx(math.e**9 * 1e-4, rel=1e-15)
    assert b0 == pytest.approx(4 * math.e * 1e-4, rel=1e-15)
    a4, b4 = lemma_constants(0.01, 4)
    assert a4 == pytest.approx(math.e**14 * 1e-8, rel=1e-15)
    assert b4 == pytest.approx(8 * math.e * 1e-8, rel=1e-15)
    assert log_bound(a0, b0) == pytest.approx(math.log(1 + a0 / (1 - a0) + b0 / (1 - b0)))
    assert log_bound(1.0, 0.1) == math.inf


def test_smallness_violation():
    phi = ProductTest(lambda x: x[:, 0], 0.0, 0.5)
    with pytest.raises(SmallnessViolation):
        elln_campaign(_uniform_sampler, phi, 1.0, 2, [8], 100, RngPlan(0), batches=10)


def _small_bump(grid):
    rho_bar = np.full(grid.shape, 0.5) * (np.abs(grid.axis) <= 1.0)
    g = lambda x: np.exp(-np.asarray(x)[:, 0] ** 2)
    return cancelling_product(g, rho_bar, grid, sup=0.01)


def test_elln_p2_below_bound():
    grid = PeriodicGrid(1, 1.0, 256)
    phi = _small_bump(grid)
    assert phi.sup == pytest.approx(0.01)
    rep = elln_campaign(_uniform_sampler, phi, 1.0, 2, [8, 64, 256], 20000, RngPlan(3))
    alpha0, beta0 = math.e**9 * 1e-4, 4 * math.e * 1e-4
    assert rep.bound == pytest.approx(math.log(1 + alpha0 / (1 - alpha0) + beta0 / (1 - beta0)))
    assert np.all(rep.estimates <= rep.bound)
    assert np.all(rep.estimates >= 0.0)


def test_elln_p4_bounded():
    grid = PeriodicGrid(1, 1.0, 256)
    phi = _small_bump(grid)
    rep = elln_campaign(_uniform_sampler, phi, 1.0, 4, [8, 64, 256], 20000, RngPlan(4))
    assert rep.below_bound


def test_default_kappa_in_smallness_regime():
    kappa = default_kappa(1.0, 1)
    assert bessel_l1(1.0, 1) == pytest.approx(math.pi)
    assert kappa == pytest.approx(1 / (8 * math.exp(4.5) * math.pi**2))
    with pytest.raises(ValueError):
        bessel_l1(0.5, 1)


# -- entropy proxy ---------------------------------------------------------------------------


def test_kl_self_distribution():
    grid = PeriodicGrid(1, 8.0, 256)
    rho = gaussian_on_grid(grid, np.zeros(1), 1.0)
    X = sample_grid_density(rho, grid, 100_000, np.random.default_rng(5))
    est = marginal_kl(X, rho, grid)
    assert 0.0 <= est.value <= 0.01
    shifted = X + 0.5
    assert marginal_kl(shifted, rho, grid).value > 5 * est.value


def test_kl_uniform():
    grid = PeriodicGrid(1, 8.0, 256)
    rho = np.full(grid.shape, 1 / 16)
    X = np.random.default_rng(6).uniform(-8, 8, size=(100_000, 1))
    assert marginal_kl(X, rho, grid).value <= 0.01


def test_kl_needs_samples():
    grid = PeriodicGrid(1, 8.0, 64)
    with pytest.raises(ValueError):
        marginal_kl(np.zeros((100, 1)), np.full(grid.shape, 1 / 16), grid)


# -- campaigns -------------------------------------------------------------------------------


def test_moment_campaign_degenerate_atom():
    cfg = small_config(kernel="zero()", sigma="constant(0.0)", nu="constant(0.0)", rho0="atom(at=0.0)",
                       replicas=2, M=256, cutoff=8 * math.pi)  # dual lattice of the box
    sweep = norm_sweep(cfg)
    assert np.max(sweep.plain) <= 1e-12
    assert np.max(np.abs(sweep.bilinear)) <= 1e-12
    assert np.max(sweep.interaction) <= 1e-12


def test_moment_campaign_rejects_unknown_kind():
    with pytest.raises(ValueError):
        moment_campaign(small_config(), "bogus", 2)


def test_increments_lag_zero_and_validation():
    cfg = small_config(kernel="zero()", replicas=2, stride=1)
    sample = increment_campaign(cfg, [0, 1, 2, 4], N=50)
    assert np.all(sample.moments[:, 0] == 0.0)
    assert np.all(sample.moments[:, 1:] > 0.0)
    with pytest.raises(ValueError):
        increment_campaign(cfg, [1, 2], N=50)


def test_increment_fit_doubling_consistency():
    lags = (1, 2, 4, 8)
    mom = np.array([[3.0 * (l * 0.01) ** 2 for l in lags]] * 3) * np.array([[1.0], [1.1], [0.9]])
    fit = increment_fit(IncrementSample(lags, 0.01, 100, 3.0, mom))
    x = np.array([0.01, 0.02, 0.04])
    assert np.allclose(fit.predict(2 * x) / fit.predict(x), 2**fit.slope, rtol=1e-12)
    assert fit.slope == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("changes", [{"nu": "constant(0.0)"}, {"sigma": "constant(0.0)"}])
def test_cross_term_vanishes(changes):
    cfg = small_config(kernel="zero()", replicas=3, **changes)
    sample = martingale_campaign(cfg, N=50)
    verdicts, rows = cross_term_check(sample)
    assert all(r[2] == 0.0 for r in rows)
    assert all(v.passed for v in verdicts)


def test_clt_point_mass_without_idiosyncratic_noise():
    cfg = small_config(kernel="zero()", sigma="constant(0.0)", nu="constant(0.0)", rho0="atom(at=0.0)")
    sample = conditional_clt(cfg, replicas=500, N=10)
    assert np.ptp(sample.particle) == 0.0
    res = clt_result(sample)
    assert all(v.passed for v in res.verdicts if v.criterion.startswith("clt_normality"))


def test_clt_needs_runs():
    cfg = small_config(kernel="zero()", sigma="constant(0.0)", nu="constant(0.0)", rho0="atom(at=0.0)")
    with pytest.raises(ValueError):
        clt_result(conditional_clt(cfg, replicas=499, N=10))


def test_campaign_csv_reproducible(tmp_path):
    cfg = small_config(kernel="gaussian(amplitude=0.5, width=1.0)", replicas=3)
    params = resolve_params("converge", cfg, {})
    _, a = execute("converge", cfg, params, tmp_path / "a")
    _, b = execute("converge", cfg, params, tmp_path / "b")
    assert a.artifacts == b.artifacts
    assert any(k.endswith(".csv") for k in a.artifacts)
