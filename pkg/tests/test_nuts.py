import math

import numpy as np
import pytest
from scipy import stats

from rcbayes.autodiff import log
from rcbayes.density import Log, TargetDensity
from rcbayes.diagnostics import gelman_rubin
from rcbayes.errors import AllDivergent, ConfigError, InitFailure
from rcbayes.nuts import DualAveraging, NutsConfig, PosteriorSamples, leapfrog, sample


def std_normal(dim):
    names = [f"z{i}" for i in range(dim)]
    return TargetDensity.from_function(
        lambda e: -0.5 * sum(e[n] * e[n] for n in names), names)


class TestLeapfrog:
    def test_hand_arithmetic(self):
        u, p, logp, g = leapfrog(std_normal(1), [0.0], [1.0], 0.1)
        assert u[0] == pytest.approx(0.1, abs=1e-15)
        assert p[0] == pytest.approx(0.995, abs=1e-15)
        assert g[0] == pytest.approx(-0.1, abs=1e-15)
        assert logp == pytest.approx(-0.005, abs=1e-15)

    def test_zero_step_is_identity(self):
        u0, p0 = np.array([0.3, -1.2]), np.array([0.5, 0.25])
        u, p, _, _ = leapfrog(std_normal(2), u0, p0, 0.0)
        assert np.array_equal(u, u0) and np.array_equal(p, p0)

    def test_harmonic_flow(self):
        t = std_normal(1)
        u, p, g = np.array([1.0]), np.array([0.0]), None
        H0 = 0.5
        for _ in range(100):
            u, p, _, g = leapfrog(t, u, p, 0.01, g)
        H = 0.5 * (u[0] ** 2 + p[0] ** 2)
        assert abs(H - H0) < 1e-3
        assert u[0] == pytest.approx(math.cos(1.0), abs=1e-2)
        assert p[0] == pytest.approx(-math.sin(1.0), abs=1e-2)

    def test_reversible(self):
        t = std_normal(3)
        u0, p0 = np.array([0.2, -0.4, 1.0]), np.array([1.0, 0.3, -0.7])
        u, p, _, _ = leapfrog(t, u0, p0, 0.2)
        ub, pb, _, _ = leapfrog(t, u, -p, 0.2)
        np.testing.assert_allclose(ub, u0, atol=1e-14)
        np.testing.assert_allclose(-pb, p0, atol=1e-14)

    def test_non_finite_start(self):
        t = TargetDensity.from_function(lambda e: log(e["a"]), ["a"])
        with pytest.raises(ValueError):
            leapfrog(t, [-1.0], [0.0], 0.1)


class TestSample:
    def test_ten_dimensional_normal(self):
        s = sample(std_normal(10), NutsConfig(chains=4, warmup=1000, draws=1000, seed=1))
        flat = s.flat()
        assert np.abs(flat.mean(axis=0)).max() < 0.1
        var = flat.var(axis=0)
        assert var.min() > 0.8 and var.max() < 1.2
        assert max(gelman_rubin(s.chains(n)) for n in s.names) < 1.05
        assert s.n_divergent / flat.shape[0] < 0.01

    def test_gamma_under_log_transform(self):
        # Gamma(2, 1): log x - x
        t = TargetDensity.from_function(lambda e: log(e["x"]) - e["x"], ["x"], [Log()])
        s = sample(t, NutsConfig(chains=4, warmup=500, draws=1000, seed=2))
        x = s.param("x")
        assert np.all(x > 0)
        assert x.mean() == pytest.approx(2.0, abs=0.1)

    def test_ks_standard_normal(self):
        s = sample(std_normal(1), NutsConfig(chains=4, warmup=500, draws=1000, seed=3))
        assert stats.kstest(s.param("z0"), "norm").statistic < 0.05

    def test_deterministic(self):
        cfg = NutsConfig(chains=2, warmup=100, draws=100, seed=7)
        a = sample(std_normal(3), cfg)
        b = sample(std_normal(3), cfg)
        assert np.array_equal(a.draws, b.draws)
        assert np.array_equal(a.tree_depth, b.tree_depth)

    def test_chains_differ(self):
        s = sample(std_normal(2), NutsConfig(chains=2, warmup=50, draws=50, seed=0))
        assert not np.array_equal(s.draws[0], s.draws[1])

    def test_identity_mass(self):
        s = sample(std_normal(2), NutsConfig(chains=1, warmup=300, draws=500, mass="identity"))
        assert np.abs(s.flat().mean(axis=0)).max() < 0.2

    def test_bounds_never_violated(self):
        t = TargetDensity.from_function(lambda e: log(e["x"]) - e["x"], ["x"], [Log()])
        s = sample(t, NutsConfig(chains=2, warmup=200, draws=300))
        assert s.param("x").min() > 0

    def test_init_failure(self):
        t = TargetDensity.from_function(lambda e: log(e["a"]), ["a"])
        with pytest.raises(InitFailure):
            sample(t, NutsConfig(chains=1, warmup=10, draws=10), init=[-5.0])

    def test_all_divergent_warns(self):
        class Spike:
            # finite only at the origin, so every leapfrog step leaves the support
            dim = 1
            layout = type("L", (), {"names": ("a",)})()

            def log_density_and_grad(self, u):
                return (0.0, np.zeros(1)) if u[0] == 0.0 else (-math.inf, None)

            def constrain(self, u):
                return u

        with pytest.warns(AllDivergent):
            s = sample(Spike(), NutsConfig(chains=1, warmup=0, draws=20, jitter=0.0),
                       init=[0.0])
        assert s.divergent.all()
        assert np.all(s.draws == 0.0)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(chains=0), dict(draws=0), dict(target_accept=1.0),
                                    dict(warmup=-1), dict(mass="dense"), dict(step_size=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            NutsConfig(**kw)

    def test_dual_averaging_moves_toward_target(self):
        da = DualAveraging(1.0, 0.8)
        for _ in range(50):
            eps = da.update(0.2)
        assert eps < 1.0
        da = DualAveraging(1.0, 0.8)
        for _ in range(50):
            eps = da.update(1.0)
        assert eps > 1.0


class TestPosteriorSamples:
    def make(self):
        d = np.arange(24, dtype=float).reshape(2, 4, 3)
        return PosteriorSamples(d, ["a", "b", "c"])

    def test_access(self):
        s = self.make()
        assert s.chains("b").shape == (2, 4)
        assert s.param("a").tolist() == [0, 3, 6, 9, 12, 15, 18, 21]
        assert s.point(4) == {"a": 12.0, "b": 13.0, "c": 14.0}
        assert "c" in s and "z" not in s
        assert s.mean()["a"] == 10.5

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            self.make().chains("z")

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            PosteriorSamples(np.zeros((2, 3)), ["a"])
        with pytest.raises(ValueError):
            PosteriorSamples(np.zeros((1, 2, 3)), ["a"])
