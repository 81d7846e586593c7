import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcbayes.errors import DimensionMismatch, EmptyHistory, MissingExogenous
from rcbayes.forecast import (forecast, future_inputs, hvac_hold, parse_band, terminal_state)
from rcbayes.io import generate_synthetic
from rcbayes.nuts import PosteriorSamples
from rcbayes.thermal_models import ThermalParams, build_matrices, simulate

TI = dict(R_ia=5.3, C_i=25.0, A_w=7.9, sigma_i=0.05, sigma_obs=0.05)
TITE = dict(R_ie=1.0, R_ea=4.3, C_i=20.0, C_e=50.0, A_w=5.0, sigma_i=0.05, sigma_e=0.05,
            sigma_obs=0.05)


def point_mass(theta, n=10):
    names = list(theta)
    return PosteriorSamples(np.tile([theta[k] for k in names], (1, n, 1)), names)


def spread(theta, n=400, seed=0):
    rng = np.random.default_rng(seed)
    names = list(theta)
    base = np.array([theta[k] for k in names])
    return PosteriorSamples((base * rng.lognormal(0, 0.05, (n, len(names))))[None], names)


def exo(K, seed=0):
    rng = np.random.default_rng(seed)
    return future_inputs(rng.normal(5, 3, K), rng.choice([0.0, 6.0], K), rng.uniform(0, .5, K))


class TestForecast:
    @pytest.mark.parametrize("kind,theta,x0", [("Ti", TI, [20.0]),
                                               ("TiTe", TITE, [20.0, 15.0])])
    def test_point_mass_is_rollout(self, kind, theta, x0):
        e = exo(48)
        res = forecast(kind, point_mass(theta), x0, e, 0.5, n_draws=20, with_noise=False,
                       seed=1)
        mats = build_matrices(kind, ThermalParams.from_flat(kind, theta), 0.5)
        _, y = simulate(mats, np.vstack([np.zeros(3), e]), x0, with_noise=False)
        assert np.array_equal(res.mean, y[0, 1:])
        assert np.array_equal(res.low, res.mean) and np.array_equal(res.high, res.mean)

    def test_point_mass_quantile_band_zero(self):
        res = forecast("Ti", point_mass(TI), [20.0], exo(24), 0.5, n_draws=30,
                       band_mode="quantile(0.05)", with_noise=False, seed=0)
        assert np.array_equal(res.low, res.high)

    def test_band_contains_mean(self):
        res = forecast("Ti", spread(TI), [20.0], exo(72), 0.5, n_draws=200, seed=2)
        assert np.all(res.low <= res.mean) and np.all(res.mean <= res.high)
        assert res.horizon == 72 and res.band_mode == "minmax"

    def test_deterministic(self):
        a = forecast("Ti", spread(TI), [20.0], exo(30), 0.5, n_draws=50, seed=3)
        b = forecast("Ti", spread(TI), [20.0], exo(30), 0.5, n_draws=50, seed=3)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.high, b.high)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 40), st.integers(0, 100))
    def test_minmax_nested(self, n, extra, seed):
        s, e = spread(TI, 100, seed), exo(20, seed)
        small = forecast("Ti", s, [20.0], e, 0.5, n_draws=n, seed=seed)
        big = forecast("Ti", s, [20.0], e, 0.5, n_draws=n + extra, seed=seed)
        assert np.all(big.low <= small.low) and np.all(big.high >= small.high)

    def test_noiseless_spread_from_parameters_only(self):
        res = forecast("Ti", spread(TI), [20.0], exo(48), 0.5, n_draws=200,
                       band_mode="quantile(0.05)", with_noise=False, seed=0)
        width = res.high - res.low
        assert width[0] > 0 and width[-1] > width[0]

    def test_state_draws_and_gaussian(self):
        s = spread(TITE, 50)
        xs = np.column_stack([np.full(50, 20.0), np.full(50, 15.0)])
        a = forecast("TiTe", s, xs, exo(10), 0.5, n_draws=20, with_noise=False, seed=0)
        b = forecast("TiTe", s, [20.0, 15.0], exo(10), 0.5, n_draws=20, with_noise=False,
                     seed=0)
        np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-12)
        c = forecast("TiTe", s, ([20.0, 15.0], np.eye(2) * 0.01), exo(10), 0.5, n_draws=20,
                     seed=0)
        assert np.all(np.isfinite(c.mean))
        with pytest.raises(DimensionMismatch):
            forecast("TiTe", s, xs[:10], exo(10), 0.5, n_draws=20)
        with pytest.raises(DimensionMismatch):
            forecast("TiTe", s, [20.0], exo(10), 0.5)

    def test_clamp(self):
        res = forecast("Ti", spread(TI), [20.0], exo(48), 0.5, n_draws=50, seed=0,
                       clamp=(19.5, 20.5))
        assert res.low.min() >= 19.5 and res.high.max() <= 20.5

    def test_missing_exogenous(self):
        with pytest.raises(MissingExogenous):
            forecast("Ti", point_mass(TI), [20.0], np.ones((5, 2)), 0.5)
        bad = exo(5)
        bad[2, 0] = np.nan
        with pytest.raises(MissingExogenous):
            forecast("Ti", point_mass(TI), [20.0], bad, 0.5)
        with pytest.raises(MissingExogenous):
            future_inputs([1, 2], [0], [0, 0])

    def test_too_few_draws(self):
        with pytest.raises(ValueError):
            forecast("Ti", point_mass(TI), [20.0], exo(5), 0.5, n_draws=1)

    def test_csv(self, tmp_path):
        res = forecast("Ti", spread(TI), [20.0], exo(6), 0.5, n_draws=10, seed=0)
        path = tmp_path / "f.csv"
        res.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["step", "mean", "low", "high"]
        assert len(rows) == 7 and float(rows[3][1]) == res.mean[2]

    def test_terminal_state(self):
        p = ThermalParams.from_flat("Ti", TI)
        data, _ = generate_synthetic("Ti", p, 100, 0.5, seed=0)
        m, P = terminal_state("Ti", point_mass(TI), data)
        assert abs(m[0] - data.y[-1]) < 0.2 and 0 < P[0, 0] < 0.05 ** 2


class TestBands:
    def test_parse(self):
        assert parse_band("minmax") == ("minmax", None)
        assert parse_band("quantile") == ("quantile", 0.05)
        assert parse_band("quantile(0.1)") == ("quantile", 0.1)
        assert parse_band(("quantile", 0.2)) == ("quantile", 0.2)
        with pytest.raises(ValueError):
            parse_band("median")


class TestHvacHold:
    def test_zero(self):
        assert hvac_hold([3.0, 0.0], 5).tolist() == [0.0] * 5

    def test_cooling(self):
        assert hvac_hold([0.0, -2.0], 4).tolist() == [-2.0] * 4

    def test_empty_horizon(self):
        assert hvac_hold([1.0], 0).size == 0

    def test_empty_history(self):
        with pytest.raises(EmptyHistory):
            hvac_hold([], 3)

    def test_dataset_template(self):
        p = ThermalParams.from_flat("Ti", TI)
        data, _ = generate_synthetic("Ti", p, 50, 0.5, seed=0)
        assert np.all(hvac_hold(data, 3) == data.phi_h[-1])
