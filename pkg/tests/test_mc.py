import math

import numpy as np
import pytest

from poissonity.dist import CountSample, DistSpec, inverse_cdf
from poissonity.gof import sigma_sq
from poissonity.mc import (
    MixtureSpec,
    PowerRow,
    ScenarioConfig,
    lambda_grid,
    level_sweep,
    mu_grid,
    power_curve_contiguous,
    r_hat,
    run_scenario,
    sample_contiguous,
    scaled_t_hat,
    simulate_statistics,
    substream,
)

BERNOULLI = DistSpec.binomial(1, 0.5)


@pytest.fixture
def nb_cfg():
    return ScenarioConfig(DistSpec.negbinomial(1, 0.5), 30, 2500, ("W", "ID", "Z1"))


class TestStreams:
    def test_reproducible(self):
        a = substream(1, "x", 5).random(4)
        b = substream(1, "x", 5).random(4)
        assert np.array_equal(a, b)

    def test_distinct_by_rep_seed_and_id(self):
        base = substream(1, "x", 0).random(4)
        for other in (substream(1, "x", 1), substream(2, "x", 0), substream(1, "y", 0)):
            assert not np.array_equal(base, other.random(4))


class TestMixture:
    def test_contaminant_mean_checked(self):
        with pytest.raises(ValueError):
            MixtureSpec(0.5, DistSpec.poisson(1), 1.0)

    def test_weight_bound(self):
        mix = MixtureSpec(0.5, BERNOULLI, 5.0)
        assert mix.weight(100) == 0.5
        with pytest.raises(ValueError):
            mix.weight(25)

    def test_stream_order(self):
        mix = MixtureSpec(0.5, BERNOULLI, 2.0)
        n = 16
        u = np.random.default_rng(8).random(2 * n).reshape(n, 2)
        w = 2.0 / 4.0
        expected = np.where(
            u[:, 0] < 1 - w,
            inverse_cdf(DistSpec.poisson(0.5), u[:, 1]),
            inverse_cdf(BERNOULLI, u[:, 1]),
        )
        got = sample_contiguous(mix, n, np.random.default_rng(8))
        assert np.array_equal(got.values, expected)

    def test_zero_frequency(self):
        n = 10**6
        mix = MixtureSpec(0.5, BERNOULLI, 2.0)
        s = sample_contiguous(mix, n, np.random.default_rng(21))
        w = 2 / math.sqrt(n)
        p0 = (1 - w) * math.exp(-0.5) + w * 0.5
        assert abs(s.ecdf(0) - p0) < 4 * math.sqrt(p0 * (1 - p0) / n)

    def test_near_full_weight_draws_from_contaminant(self):
        n = 400
        mix = MixtureSpec(0.5, BERNOULLI, math.sqrt(n) - 1e-9)
        s = sample_contiguous(mix, n, np.random.default_rng(2))
        assert s.values.max() <= 1


class TestScenario:
    def test_thread_count_does_not_matter(self, nb_cfg):
        ref = run_scenario(nb_cfg, threads=1)
        assert run_scenario(nb_cfg, threads=4) == ref
        assert run_scenario(nb_cfg, threads=16) == ref

    def test_single_rep(self):
        for row in run_scenario(ScenarioConfig(DistSpec.poisson(2), 20, 1, ("W", "ID"))):
            assert row.rejection_rate in (0.0, 1.0)

    def test_mixture_source(self):
        mix = MixtureSpec(0.5, BERNOULLI, 1.0)
        rows = run_scenario(ScenarioConfig(mix, 20, 200, ("Z0",)))
        assert 0 <= rows[0].rejection_rate <= 1

    @pytest.mark.parametrize(
        "kwargs",
        [dict(reps=0), dict(n=0), dict(alpha=1.0), dict(tests=()), dict(tests=("X",))],
    )
    def test_validation(self, kwargs):
        base = dict(dist=DistSpec.poisson(1), n=10, reps=10)
        with pytest.raises(ValueError):
            ScenarioConfig(**{**base, **kwargs})

    def test_default_id(self):
        assert ScenarioConfig(DistSpec.poisson(1), 10, 5).scenario_id == "poisson:1/n=10"

    def test_stderr(self):
        row = PowerRow("s", "W", 25, 100)
        assert row.rejection_rate == 0.25
        assert row.mc_stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 100))


class TestGrids:
    def test_mu_grid(self):
        assert mu_grid(0.5, 1.1, 0.2) == [0.5, 0.7, 0.9, 1.1]
        assert mu_grid(2, 2, 0.2) == [2]

    def test_level_sweep_single_point(self):
        out = level_sweep(3, 3, 1, 20, 50, ["Z0", "Z1"])
        assert len(out) == 1 and out[0][0] == 3
        assert [r.test for r in out[0][1]] == ["Z0", "Z1"]

    @pytest.mark.parametrize("n, count, last", [(20, 88, 4.40), (50, 140, 7.00)])
    def test_lambda_grid(self, n, count, last):
        grid = lambda_grid(n, 0.05)
        assert grid.size == count
        assert grid[0] == 0.05
        assert grid[-1] == pytest.approx(last)
        assert grid[-1] <= math.sqrt(n) - 0.05 + 1e-12
        np.testing.assert_allclose(np.diff(grid), 0.05, atol=1e-9)

    def test_lambda_grid_too_coarse(self):
        with pytest.raises(ValueError):
            lambda_grid(1, 2.0)


class TestRHat:
    def test_constant_curve(self):
        assert r_hat(np.full(30, 0.05)) == pytest.approx(0.05)

    def test_mean(self):
        assert r_hat([0.1, 0.2, 0.6]) == pytest.approx(0.3)

    def test_empty(self):
        with pytest.raises(ValueError):
            r_hat([])

    def test_small_lambda_recovers_level(self):
        curve = power_curve_contiguous(0.5, BERNOULLI, 20, 0.05, 4000, ["Z0"], seed=7)
        first = curve.powers["Z0"][0]
        assert abs(first - 0.05) < 4 * math.sqrt(0.05 * 0.95 / 4000) + 0.02
        assert curve.stderr("Z0").shape == curve.lambdas.shape


class TestReplicates:
    def test_scaled_t_hat_matches_direct(self):
        spec = DistSpec.poisson(2)
        vals = scaled_t_hat(spec, 30, 5, k=1, seed=3, scenario_id="s")
        for rep in range(5):
            s = CountSample(inverse_cdf(spec, substream(3, "s", rep).random(30)))
            direct = math.sqrt(30) * (math.exp(-s.mean) * (1 + s.mean) - s.ecdf(1))
            assert vals[rep] == pytest.approx(direct, abs=1e-12)

    def test_statistics_thread_invariant(self):
        a = simulate_statistics(DistSpec.poisson(1), 50, 3000, "W", threads=1)
        b = simulate_statistics(DistSpec.poisson(1), 50, 3000, "W", threads=4)
        assert np.array_equal(a, b)


def _rate(spec, n, test):
    return run_scenario(ScenarioConfig(spec, n, 10_000, (test,)))[0].rejection_rate


@pytest.mark.slow
class TestPublishedRates:
    def test_poisson1_w(self):
        assert abs(_rate(DistSpec.poisson(1), 50, "W") - 0.046) <= 0.015

    def test_negbinomial_id(self):
        assert abs(_rate(DistSpec.negbinomial(1, 0.5), 50, "ID") - 0.839) <= 0.03

    def test_poisson15_w(self):
        assert abs(_rate(DistSpec.poisson(15), 50, "W") - 0.049) <= 0.015

    def test_small_mu_z0_level(self):
        for mu, rows in level_sweep(0.5, 1.5, 0.5, 50, 10_000, ["Z0"]):
            assert abs(rows[0].rejection_rate - 0.05) <= 0.02

    def test_null_variance_of_scaled_t(self):
        vals = scaled_t_hat(DistSpec.poisson(3), 100, 10_000, k=2)
        assert np.var(vals) == pytest.approx(sigma_sq(3, 2), rel=0.05)
