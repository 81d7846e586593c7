import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcbayes.diagnostics import (ParamSummary, SummaryReport, credible_interval, gelman_rubin,
                                 interval_coverage, mape, posterior_predictive_check, summarize)
from rcbayes.errors import DimensionMismatch, ZeroObservation, ZeroWithinVariance
from rcbayes.io import generate_synthetic
from rcbayes.nuts import PosteriorSamples
from rcbayes.thermal_models import ThermalParams, TimeSeriesDataset

TI = dict(R_ia=5.3, C_i=25.0, A_w=7.9, sigma_i=0.05, sigma_obs=0.05)


class TestGelmanRubin:
    def test_identical_chains(self):
        c = np.random.default_rng(0).normal(size=100)
        assert gelman_rubin([c, c]) == pytest.approx(math.sqrt(0.99), abs=1e-12)

    def test_separated_chains(self):
        rng = np.random.default_rng(1)
        assert gelman_rubin([rng.normal(0, 1, 1000), rng.normal(10, 1, 1000)]) > 5

    def test_stationary_split(self):
        stream = np.random.default_rng(2).normal(size=40_000)
        assert gelman_rubin(stream.reshape(4, -1), split=True) < 1.01

    def test_constant(self):
        with pytest.raises(ZeroWithinVariance):
            gelman_rubin(np.ones((3, 10)))

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            gelman_rubin([[1.0, 2.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-100, 100), st.floats(0.01, 100).flatmap(
        lambda b: st.sampled_from([b, -b])), st.integers(0, 1000))
    def test_affine_invariance(self, a, b, seed):
        x = np.random.default_rng(seed).normal(size=(3, 50)) + np.arange(3)[:, None] * 0.3
        assert gelman_rubin(a + b * x) == pytest.approx(gelman_rubin(x), abs=1e-10)


class TestCredibleInterval:
    def test_constant(self):
        assert credible_interval([2.5] * 10) == (2.5, 2.5)

    def test_two_points(self):
        assert credible_interval([0.0, 1.0], alpha=0.5) == (0.25, 0.75)

    def test_uniform(self):
        lo, hi = credible_interval(np.random.default_rng(3).uniform(size=100_000))
        assert lo == pytest.approx(0.025, abs=0.005) and hi == pytest.approx(0.975, abs=0.005)

    def test_too_few(self):
        with pytest.raises(DimensionMismatch):
            credible_interval([1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
    def test_monotone_in_alpha(self, seed, a1, a2):
        x = np.random.default_rng(seed).normal(size=200)
        small, big = sorted((a1, a2))
        lo_s, hi_s = credible_interval(x, small)
        lo_b, hi_b = credible_interval(x, big)
        assert lo_s <= lo_b and hi_b <= hi_s


class TestMetrics:
    def test_mape(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mape([100.0], [90.0]) == pytest.approx(0.10, abs=1e-15)
        with pytest.raises(ZeroObservation):
            mape([0.0, 1.0], [0.0, 1.0])

    def test_coverage(self):
        y = np.array([1.0, 2.0, 3.0])
        assert interval_coverage(y, y - 1, y + 1) == 100.0
        assert interval_coverage(y, y - 3, y - 2) == 0.0
        assert interval_coverage(y, [0, 0, 0], [1.5, 1.5, 1.5]) == pytest.approx(100 / 3)

    def test_coverage_bad_band(self):
        with pytest.raises(ValueError):
            interval_coverage([1.0], [2.0], [0.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000))
    def test_coverage_permutation(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=30)
        lo = rng.normal(-1, 1, 30)
        hi = lo + rng.uniform(0, 3, 30)
        p = rng.permutation(30)
        assert interval_coverage(y, lo, hi) == interval_coverage(y[p], lo[p], hi[p])


def point_mass_samples(theta, n=50):
    names = list(theta)
    return PosteriorSamples(np.tile([theta[k] for k in names], (1, n, 1)), names)


class TestPredictiveCheck:
    data, _ = generate_synthetic("Ti", ThermalParams.from_flat("Ti", TI), 300, 0.5, seed=4)

    def test_self_consistent(self):
        p = posterior_predictive_check("Ti", point_mass_samples(TI), self.data, n_rep=200,
                                       seed=0)
        assert all(0.05 < v < 0.95 for v in p.values()), p

    def test_shifted_data(self):
        d = self.data
        shifted = TimeSeriesDataset(d.timestamps, d.y + 10, d.ta, d.phi_h, d.phi_s)
        p = posterior_predictive_check("Ti", point_mass_samples(TI), shifted, n_rep=100,
                                       seed=0, x0=[d.y[0]])
        assert p["mean"] < 0.01

    def test_deterministic(self):
        s = point_mass_samples(TI)
        a = posterior_predictive_check("Ti", s, self.data, n_rep=100, seed=9)
        b = posterior_predictive_check("Ti", s, self.data, n_rep=100, seed=9)
        assert a == b

    def test_needs_replicates(self):
        with pytest.raises(ValueError):
            posterior_predictive_check("Ti", point_mass_samples(TI), self.data, n_rep=50)


class TestSummary:
    def make(self):
        rng = np.random.default_rng(5)
        draws = np.stack([rng.normal([1.7, 3.5, 21.0, 68.0, 5.0], 0.1, size=(200, 5))
                          for _ in range(2)])
        return PosteriorSamples(draws, ["R_ie", "R_ea", "C_i", "C_e", "A_w"])

    def test_fields(self):
        s = self.make()
        rep = summarize(s, "TiTe", {"rmse": 0.1})
        r = rep.params["R_ie"]
        assert r.l95 <= r.mean <= r.u95
        assert r.rhat >= math.sqrt(199 / 200)
        assert rep.composite["totalR"].mean == pytest.approx(
            np.mean(s.param("R_ie") + s.param("R_ea")))
        assert rep.metrics == {"rmse": 0.1}

    def test_skips_states(self):
        d = np.zeros((1, 3, 2))
        d[..., 0] = [1.0, 2.0, 3.0]
        rep = summarize(PosteriorSamples(d, ["a", "x[0].i"]))
        assert list(rep.params) == ["a"] and rep.params["a"].rhat is None

    def test_roundtrip(self):
        rep = summarize(self.make(), "TiTe")
        again = SummaryReport.from_dict(json.loads(rep.to_json()))
        assert again == rep

    def test_param_summary(self):
        p = ParamSummary(1.0, 0.1, 0.8, 1.2)
        assert p.rhat is None
