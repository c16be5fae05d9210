import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from poissonity.dist import CountSample, DistSpec
from poissonity.gof import (
    TestResult,
    batch_test,
    chisq_cdf,
    chisq_quantile,
    f_k,
    fisher_id,
    normal_cdf,
    normal_quantile,
    parse_method,
    poisson_terms,
    select_k,
    select_k_batch,
    sigma_sq,
    sigma_tilde_sq,
    t_hat,
    w_stat,
    z_stat,
)
from poissonity.mc import ScenarioConfig, run_scenario

XBARS = [0.1, 0.5, 1, 2, 5, 10, 15]


def sample_of(*values):
    return CountSample(np.array(values))


def _erf_cdf(x):
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


def _bisect(fn, target, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _plugin_exact(x, k):
    """Plug-in variance in exact rational-plus-exp arithmetic with mpmath."""
    mpmath.mp.dps = 50
    x = mpmath.mpf(x)
    s = mpmath.fsum(x**j / mpmath.factorial(j) for j in range(k + 1))
    return float(mpmath.exp(-2 * x) * (s * (mpmath.exp(x) - s) - x ** (2 * k + 1) / mpmath.factorial(k) ** 2))


class TestFk:
    def test_zero_mean(self):
        assert [f_k(0.0, k) for k in range(4)] == [1.0] * 4

    @pytest.mark.parametrize("mu", [0.3, 1, 7.5])
    def test_k0(self, mu):
        assert f_k(mu, 0) == pytest.approx(math.exp(-mu), rel=1e-15)

    def test_f1_at_1(self):
        assert f_k(1.0, 1) == pytest.approx(2 * math.exp(-1), abs=1e-15)
        assert f_k(1.0, 1) == pytest.approx(stats.poisson.pmf([0, 1], 1).sum(), abs=1e-15)

    @pytest.mark.parametrize("mu", [0.5, 2, 10, 16])
    def test_matches_poisson_cdf(self, mu):
        ks = range(0, 40)
        np.testing.assert_allclose([f_k(mu, k) for k in ks], stats.poisson.cdf(list(ks), mu), rtol=1e-12, atol=1e-15)

    def test_vectorized(self):
        mus = np.array([[0.5, 1.0], [2.0, 3.0]])
        out = f_k(mus, 2)
        assert out.shape == (2, 2)
        assert out[1, 0] == pytest.approx(f_k(2.0, 2))

    def test_negative_mean_rejected(self):
        with pytest.raises(ValueError):
            f_k(-0.1, 0)

    def test_terms_large_k_do_not_overflow(self):
        terms = poisson_terms(16.0, 200)
        assert np.all(np.isfinite(terms.astype(float)))
        assert float(terms.sum()) == pytest.approx(1.0, abs=1e-12)


class TestTHat:
    def test_all_zero(self):
        assert t_hat(sample_of(0, 0, 0), 0) == 0.0

    def test_hand_example(self):
        assert t_hat(sample_of(0, 0, 1, 1), 0) == pytest.approx(math.exp(-0.5) - 0.5, abs=1e-15)
        assert t_hat(sample_of(0, 0, 1, 1), 0) == pytest.approx(0.106531, abs=1e-6)

    def test_scale_under_null(self):
        rng = np.random.default_rng(5)
        vals = [t_hat(CountSample(rng.poisson(2.0, 400)), 1) for _ in range(400)]
        sd = math.sqrt(sigma_sq(2.0, 1) / 400)
        assert abs(np.mean(vals)) < 4 * sd / math.sqrt(400) + 2e-3
        assert np.std(vals) == pytest.approx(sd, rel=0.15)


class TestSigmaTilde:
    def test_zero_mean(self):
        assert [sigma_tilde_sq(0.0, k) for k in range(4)] == [0.0] * 4

    @pytest.mark.parametrize("mu", XBARS)
    def test_k0_closed_form(self, mu):
        expected = math.exp(-2 * mu) * (math.exp(mu) - 1 - mu)
        assert sigma_tilde_sq(mu, 0) == pytest.approx(expected, rel=1e-12, abs=1e-16)

    @pytest.mark.parametrize("x", XBARS)
    @pytest.mark.parametrize("k", range(7))
    def test_plugin_matches_population_form(self, x, k):
        assert abs(sigma_tilde_sq(x, k) - sigma_sq(x, k)) < 1e-10

    @pytest.mark.parametrize("x", XBARS)
    @pytest.mark.parametrize("k", range(7))
    def test_matches_high_precision(self, x, k):
        assert sigma_tilde_sq(x, k) == pytest.approx(_plugin_exact(x, k), abs=1e-15, rel=1e-9)

    @settings(max_examples=200)
    @given(st.floats(0, 40), st.integers(0, 60))
    def test_bounded_by_quarter(self, x, k):
        v = sigma_tilde_sq(x, k)
        assert 0.0 <= v <= 0.25

    def test_vectorized(self):
        x = np.array(XBARS)
        np.testing.assert_allclose(sigma_tilde_sq(x, 2), [sigma_tilde_sq(v, 2) for v in XBARS])

    @pytest.mark.parametrize("mu", [0.5, 1.0, 3.0, 9.0])
    @pytest.mark.parametrize("k", [0, 1, 3, 6])
    def test_covariance_identity(self, mu, k):
        # Cov[X, I(X <= k)] for Poisson(mu), from both sides
        lhs = sum(math.exp(-mu) * mu**j / math.factorial(j - 1) for j in range(1, k + 1)) - mu * f_k(mu, k)
        rhs = -math.exp(-mu) * mu ** (k + 1) / math.factorial(k)
        assert abs(lhs - rhs) < 1e-10


class TestSelectK:
    @staticmethod
    def brute(xbar, n):
        if xbar < 1:
            return 0
        k = 0
        while True:
            fk = float(stats.poisson.cdf(k, xbar))
            if math.sqrt(_plugin_exact(xbar, k)) / (fk**2 * math.sqrt(n)) <= math.e:
                return k
            k += 1

    @pytest.mark.parametrize("xbar", [1.0, 1.5, 2.36, 4.0, 7.1, 10.0, 12.5, 15.0, 16.0])
    @pytest.mark.parametrize("n", [20, 50, 200])
    def test_matches_brute_force(self, xbar, n):
        k, capped = select_k_batch(np.array([xbar]), n)
        assert int(k[0]) == self.brute(xbar, n)
        assert not capped[0]

    def test_positive_for_large_mean_small_n(self):
        k, _ = select_k_batch(np.array([10.0]), 50)
        assert k[0] > 0

    @pytest.mark.parametrize("xbar", [1.0, 5.0])
    def test_zero_for_huge_n(self, xbar):
        k, _ = select_k_batch(np.array([xbar]), 10**6)
        assert k[0] == 0

    @pytest.mark.parametrize("xbar", [1.0, 5.0, 10.0, 15.0])
    def test_zero_eventually(self, xbar):
        # the k=0 condition holds once sqrt(n) >= sigma_0 / (e f_0^2)
        ratio = math.sqrt(sigma_tilde_sq(xbar, 0)) / (f_k(xbar, 0) ** 2 * math.e)
        n_star = math.ceil(ratio**2 * (1 + 1e-9))
        assert select_k_batch(np.array([xbar]), max(n_star, 1))[0][0] == 0
        if n_star > 2:
            assert select_k_batch(np.array([xbar]), n_star // 2)[0][0] > 0

    @given(st.floats(0, 0.999))
    def test_zero_below_one(self, xbar):
        assert select_k_batch(np.array([xbar]), 20)[0][0] == 0

    def test_from_sample(self):
        assert select_k(sample_of(0, 0, 0, 1, 2, 1, 0, 3)) == 0
        assert select_k(CountSample(np.full(50, 10))) > 0


class TestZStat:
    def test_all_zero_degenerate(self):
        res = z_stat(sample_of(0, 0, 0, 0), 0)
        assert res.degenerate and not res.reject
        assert res.statistic == 0.0 and res.p_value == 1.0

    def test_hand_value(self):
        s = sample_of(0, 0, 1, 1)
        expected = 2 * (math.exp(-0.5) - 0.5) / math.sqrt(math.exp(-1) * (math.exp(0.5) - 1.5))
        res = z_stat(s, 0)
        assert res.statistic == pytest.approx(expected, rel=1e-12)
        assert res.p_value == pytest.approx(2 * (1 - _erf_cdf(abs(expected))), rel=1e-9)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            z_stat(sample_of(1, 2), -1)

    @settings(max_examples=100)
    @given(st.lists(st.integers(0, 30), min_size=2, max_size=60), st.integers(0, 5), st.sampled_from([0.01, 0.05, 0.1]))
    def test_result_invariants(self, values, k, alpha):
        res = z_stat(CountSample(np.array(values)), k, alpha)
        assert 0.0 <= res.p_value <= 1.0
        if res.degenerate:
            assert not res.reject
        else:
            assert res.reject == (res.p_value < alpha)
            assert res.p_value == pytest.approx(2 * (1 - normal_cdf(abs(res.statistic))), abs=1e-12)
        assert sum(values) or not res.reject

    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        counts = rng.poisson(3.0, (30, 25))
        batch = batch_test(counts, "Z2")
        for i in range(30):
            single = z_stat(CountSample(counts[i]), 2)
            assert single == batch.row(i, 0.05)


class TestWStat:
    def test_all_zero_degenerate(self):
        res = w_stat(sample_of(0, 0, 0))
        assert res.degenerate and not res.reject and res.method == "W"

    def test_records_k(self):
        s = CountSample(np.random.default_rng(1).poisson(10, 50))
        res = w_stat(s)
        assert res.k_used == select_k(s)
        assert res.statistic == z_stat(s, res.k_used).statistic


class TestFisherId:
    def test_constant_sample(self):
        res = fisher_id(CountSample(np.full(20, 3)))
        assert res.statistic == 0.0 and res.reject

    def test_two_point(self):
        res = fisher_id(sample_of(0, 2))
        assert res.statistic == pytest.approx(2.0)
        assert res.k_used == 0

    def test_all_zero_degenerate(self):
        res = fisher_id(sample_of(0, 0, 0, 0, 0))
        assert res.degenerate and not res.reject

    def test_single_observation_degenerate(self):
        assert fisher_id(sample_of(4)).degenerate

    def test_p_value_two_sided(self):
        rng = np.random.default_rng(2)
        s = CountSample(rng.poisson(4, 30))
        res = fisher_id(s)
        x = s.values.astype(float)
        stat = ((x - x.mean()) ** 2).sum() / x.mean()
        assert res.statistic == pytest.approx(stat, rel=1e-12)
        g = stats.chi2.cdf(stat, 29)
        assert res.p_value == pytest.approx(2 * min(g, 1 - g), rel=1e-9)

    def test_rejection_matches_critical_values(self):
        rng = np.random.default_rng(4)
        counts = rng.negative_binomial(2, 0.5, (500, 20))
        res = batch_test(counts, "ID")
        lo, hi = stats.chi2.ppf([0.025, 0.975], 19)
        expected = ((res.statistic < lo) | (res.statistic > hi)) & ~res.degenerate
        assert np.array_equal(res.reject, expected)


class TestQuantiles:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_975_by_bisection(self):
        ref = _bisect(_erf_cdf, 0.975, -10, 10)
        assert normal_quantile(0.975) == pytest.approx(ref, abs=1e-9)
        assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)

    @pytest.mark.parametrize("x", range(-3, 4))
    def test_round_trip(self, x):
        assert normal_quantile(float(normal_cdf(x))) == pytest.approx(x, abs=1e-8)

    @pytest.mark.parametrize("p", [1e-10, 1e-6, 0.01, 0.3, 0.7, 0.99, 1 - 1e-6, 1 - 1e-10])
    def test_against_mpmath(self, p):
        mpmath.mp.dps = 30
        ref = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
        assert normal_quantile(p) == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5])
    def test_domain(self, p):
        with pytest.raises(ValueError):
            normal_quantile(p)

    def test_chisq_near_zero(self):
        assert chisq_quantile(0.0, 5) == 0.0
        assert chisq_quantile(1e-12, 5) < 1e-3

    @pytest.mark.parametrize("p", [0.025, 0.5, 0.975])
    @pytest.mark.parametrize("df", [19, 29, 49])
    def test_chisq_round_trip(self, p, df):
        q = chisq_quantile(p, df)
        assert float(chisq_cdf(q, df)) == pytest.approx(p, abs=1e-8)
        mpmath.mp.dps = 30
        assert float(mpmath.gammainc(df / 2, 0, q / 2, regularized=True)) == pytest.approx(p, abs=1e-8)

    def test_chisq_df2_is_exponential(self):
        assert chisq_quantile(1 - math.exp(-1), 2) == pytest.approx(2.0, rel=1e-8)


class TestMethods:
    @pytest.mark.parametrize("text, name", [("w", "W"), ("id", "ID"), (" z3 ", "Z3"), ("Z10", "Z10")])
    def test_parse(self, text, name):
        assert parse_method(text) == name

    @pytest.mark.parametrize("text", ["Q", "Z", "Z-1", "IDX"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            parse_method(text)

    def test_result_is_frozen(self):
        res = TestResult("W", 0.0, 0, 1.0, 0.05, False)
        with pytest.raises(AttributeError):
            res.reject = True


def _rate(spec, n, test, reps=10_000, sid=""):
    cfg = ScenarioConfig(spec, n, reps, (test,), scenario_id=sid)
    return run_scenario(cfg)[0].rejection_rate


@pytest.mark.slow
class TestMonteCarlo:
    def test_z0_level_poisson2(self):
        assert abs(_rate(DistSpec.poisson(2), 50, "Z0") - 0.048) <= 0.015

    def test_w_level_poisson5(self):
        assert abs(_rate(DistSpec.poisson(5), 50, "W") - 0.052) <= 0.015

    def test_w_power_dw(self):
        assert _rate(DistSpec.discreteweibull(0.8, 5), 20, "W") >= 0.99

    def test_id_level_poisson10(self):
        assert abs(_rate(DistSpec.poisson(10), 50, "ID") - 0.050) <= 0.010

    def test_degenerate_never_rejects(self):
        res = batch_test(np.zeros((5, 30), dtype=int), "W")
        assert not res.reject.any()
        assert not batch_test(np.zeros((5, 30), dtype=int), "Z1").reject.any()

    @pytest.mark.parametrize("mu", [0.5, 1, 2, 5])
    def test_level_property_n200(self, mu):
        assert 0.035 <= _rate(DistSpec.poisson(mu), 200, "W") <= 0.065

    def test_consistency_negbinomial(self):
        spec = DistSpec.negbinomial(1, 0.5)
        rates = [_rate(spec, n, "W") for n in (20, 50, 100, 200)]
        se = [math.sqrt(r * (1 - r) / 10_000) for r in rates]
        assert all(b >= a - s for a, b, s in zip(rates, rates[1:], se))
        assert rates[-1] > 0.99
