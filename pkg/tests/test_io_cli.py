import csv
import json
import os
import warnings

import numpy as np
import pytest
import yaml

from rcbayes import cli
from rcbayes.errors import (ConfigError, MissingColumn, NonConvergence, NonUniformSampling,
                            ParseError)
from rcbayes.io import (DriverSpec, FitArtifact, RunConfig, f_to_c, generate_synthetic, load_csv,
                        load_mixture, transfer_priors, write_csv)
from rcbayes.thermal_models import ThermalParams
from rcbayes.workflow import run_fit

TI = dict(R_ia=5.3, C_i=25.0, A_w=7.9, sigma_i=0.05, sigma_obs=0.05)
HEADER = "time,y,ta,phi_h,phi_s\n"


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        yield


class TestLoadCsv:
    def test_two_rows_five_minutes(self, tmp_path):
        p = write(tmp_path / "d.csv", HEADER + "0,20,5,1,0\n300,20.1,5,1,0\n")
        d = load_csv(p)
        assert len(d) == 2 and d.dt == pytest.approx(1 / 12, rel=1e-12)

    def test_iso_time(self, tmp_path):
        p = write(tmp_path / "d.csv", HEADER + "2020-01-01T00:00:00,20,5,1,0\n"
                  "2020-01-01T00:10:00,20,5,1,0\n2020-01-01T00:20:00Z,20,5,1,0\n")
        assert load_csv(p).dt == pytest.approx(1 / 6)

    def test_nonuniform(self, tmp_path):
        p = write(tmp_path / "d.csv", HEADER + "0,20,5,1,0\n300,20,5,1,0\n900,20,5,1,0\n")
        with pytest.raises(NonUniformSampling):
            load_csv(p)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path / "d.csv", "time,y,ta,phi_h\n0,20,5,1\n300,20,5,1\n")
        with pytest.raises(MissingColumn) as info:
            load_csv(p)
        assert "phi_s" in str(info.value)

    def test_parse_error_reports_location(self, tmp_path):
        p = write(tmp_path / "d.csv", HEADER + "0,20,5,1,0\n300,warm,5,1,0\n")
        with pytest.raises(ParseError, match="row 3.*'y'"):
            load_csv(p)

    def test_fahrenheit(self, tmp_path):
        p = write(tmp_path / "d.csv", HEADER + "0,68,32,1,0\n300,77,50,1,0\n")
        d = load_csv(p, unit="f")
        np.testing.assert_allclose(d.y, [20.0, 25.0])
        np.testing.assert_allclose(d.ta, [0.0, 10.0])
        assert f_to_c(212.0) == pytest.approx(100.0)

    def test_take_and_dt_hint(self, tmp_path):
        rows = "".join(f"{600 * i},20,5,1,0\n" for i in range(10))
        p = write(tmp_path / "d.csv", HEADER + rows)
        assert len(load_csv(p, take=4)) == 4
        load_csv(p, dt_hint=1 / 6)
        with pytest.raises(NonUniformSampling):
            load_csv(p, dt_hint=0.5)

    def test_roundtrip(self, tmp_path):
        d, _ = generate_synthetic("Ti", ThermalParams.from_flat("Ti", TI), 40, 0.5, seed=0)
        write_csv(d, tmp_path / "s.csv")
        back = load_csv(tmp_path / "s.csv")
        assert np.array_equal(back.y, d.y) and np.array_equal(back.phi_h, d.phi_h)
        assert back.dt == pytest.approx(0.5, rel=1e-12)


class TestSynthetic:
    def test_deterministic(self):
        p = ThermalParams.from_flat("TiTe", dict(R_ie=1, R_ea=4, C_i=20, C_e=50, A_w=5,
                                                 sigma_i=0.1, sigma_e=0.1, sigma_obs=0.1))
        a, _ = generate_synthetic("TiTe", p, 100, 0.5, seed=3)
        b, _ = generate_synthetic("TiTe", p, 100, 0.5, seed=3)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.phi_h, b.phi_h)

    def test_zero_noise_obeys_recursion(self):
        p = ThermalParams.from_flat("Ti", {**TI, "sigma_i": 0.0, "sigma_obs": 0.0})
        d, _ = generate_synthetic("Ti", p, 200, 0.5, seed=0)
        a = 0.5 / (5.3 * 25.0)
        pred = (1 - a) * d.y[:-1] + a * d.ta[1:] + 0.5 / 25 * d.phi_h[1:] \
            + 0.5 * 7.9 / 25 * d.phi_s[1:]
        np.testing.assert_allclose(d.y[1:], pred, rtol=0, atol=1e-12)

    def test_seasons(self):
        p = ThermalParams.from_flat("Ti", TI)
        heat, _ = generate_synthetic("Ti", p, 400, 0.5, seed=0)
        cool, _ = generate_synthetic("Ti", p, 400, 0.5, seed=0, drivers=DriverSpec("cooling"))
        assert heat.phi_h.min() >= 0 and heat.phi_h.max() > 0
        assert cool.phi_h.max() <= 0 and cool.phi_h.min() < 0
        assert np.all(heat.phi_s >= 0)

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            DriverSpec("spring")
        with pytest.raises(ConfigError):
            generate_synthetic("Ti", ThermalParams.from_flat("Ti", TI), 1)


class TestConfig:
    def test_defaults(self):
        c = RunConfig({})
        assert c["inference"]["backend"] == "nuts" and c["priors"]["regime"] == "uninformed"

    def test_hyper_without_metadata(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig({"priors": {"regime": "hyper", "metadata": None}})
        with pytest.raises(ConfigError):
            RunConfig({"priors": {"regime": "hyper", "metadata": str(tmp_path / "none.json")}})

    def test_invalid(self):
        for raw in ({"model": "TiTeThAe"}, {"inference": {"backend": "gibbs"}},
                    {"priors": {"regime": "informed"}}, {"priors": {"regime": "transferred"}}):
            with pytest.raises(ConfigError):
                RunConfig(raw)

    def test_yaml_roundtrip(self, tmp_path):
        c = RunConfig({"model": "TiTe", "seed": 4})
        (tmp_path / "c.yaml").write_text(c.to_yaml())
        assert RunConfig.load(tmp_path / "c.yaml").raw == c.raw

    def test_mixture_default(self):
        assert load_mixture() == {"weights": [0.5, 0.5], "mus": [3.02, 3.43],
                                  "sigmas": [0.59, 0.5]}


def _fit(data, backend="advi", seed=0, **priors):
    raw = {"model": "Ti", "seed": seed, "priors": priors or {},
           "inference": {"backend": backend, "formulation": "marginalized", "draws": 500,
                         "advi": {"eval_every": 100, "window": 20},
                         "nuts": {"chains": 2, "warmup": 200, "draws": 200}}}
    return run_fit(RunConfig(raw), data)


class TestArtifacts:
    data, _ = generate_synthetic("Ti", ThermalParams.from_flat("Ti", TI), 500, 0.5, seed=1)

    def test_advi_fit_summary(self):
        art = _fit(self.data)
        for name in ("R_ia", "C_i", "A_w"):
            s = art.summary.params[name]
            assert s.l95 < s.mean < s.u95
        assert art.variational["names"][:3] == ["R_ia", "C_i", "A_w"]

    def test_roundtrip_bit_exact(self, tmp_path):
        art = _fit(self.data, "nuts")
        art.save(tmp_path / "a")
        back = FitArtifact.load(tmp_path / "a")
        assert back.summary == art.summary
        assert np.array_equal(back.samples.draws, art.samples.draws)
        assert back.config == art.config and back.kind == "Ti"

    def test_transfer_centres_on_posterior(self, tmp_path):
        art = _fit(self.data)
        doc = transfer_priors(art)
        for name, s in art.summary.params.items():
            assert doc["priors"][name] == {"family": "normal", "mu": s.mean, "sigma": s.sd}
        with pytest.raises(ConfigError):
            transfer_priors(art, inflate=0)

    def test_transfer_needs_spread(self):
        with pytest.raises(ConfigError):
            transfer_priors(_fit(self.data, "map"))

    def test_wide_transfer_matches_uninformed(self, tmp_path):
        first, _ = generate_synthetic("Ti", ThermalParams.from_flat("Ti", TI), 300, 0.5, seed=9)
        path = tmp_path / "p.json"
        path.write_text(json.dumps(transfer_priors(_fit(first), inflate=1e6)))
        wide = _fit(self.data, "map", regime="transferred", transferred=str(path))
        flat = _fit(self.data, "map")
        for name in ("R_ia", "C_i", "A_w"):
            assert wide.point["theta"][name] == pytest.approx(flat.point["theta"][name],
                                                              rel=0.02)

    def test_mle_and_map(self):
        for backend in ("mle", "map"):
            art = _fit(self.data, backend)
            assert art.samples is None
            assert art.point["theta"]["R_ia"] == pytest.approx(5.3, rel=0.15)


def _config(tmp_path, data_path, **extra):
    raw = {"model": "Ti", "data": str(data_path), "seed": 0,
           "inference": {"backend": "nuts", "nuts": {"chains": 2, "warmup": 100, "draws": 100}}}
    raw.update(extra)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.fixture(scope="module")
def house(tmp_path_factory):
    d = tmp_path_factory.mktemp("house")
    assert cli.main(["simulate", "--model", "Ti", "--params",
                     "R_ia=5.3,C_i=25,A_w=7.9,sigma_i=0.05,sigma_obs=0.05", "--n", "300",
                     "--seed", "1", "--out", str(d / "hist.csv")]) == 0
    data = load_csv(d / "hist.csv")
    fut = d / "future.csv"
    with open(fut, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "ta", "phi_s", "phi_h"])
        for k in range(24):
            w.writerow([k, 5.0, 0.1, 0.0])
    return d, data


class TestCli:
    def test_fit_is_deterministic(self, tmp_path, house):
        d, _ = house
        cfg = _config(tmp_path, d / "hist.csv")
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "draws.csv").read_bytes()
        assert a == (tmp_path / "b" / "draws.csv").read_bytes()
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert set(summary["parameters"]["R_ia"]) == {"mean", "sd", "l95", "u95", "rhat"}

    def test_forecast_diagnose_transfer(self, tmp_path, house, capsys):
        d, _ = house
        cfg = _config(tmp_path, d / "hist.csv")
        art = tmp_path / "art"
        assert cli.main(["fit", "--config", str(cfg), "--out", str(art)]) == 0
        out = tmp_path / "f.csv"
        assert cli.main(["forecast", "--artifact", str(art), "--data", str(d / "hist.csv"),
                         "--future", str(d / "future.csv"), "--n-draws", "50",
                         "--band", "quantile(0.05)", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 25
        capsys.readouterr()
        assert cli.main(["diagnose", "--artifact", str(art), "--data", str(d / "hist.csv"),
                         "--n-rep", "100"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report["ppc"]) == {"mean", "stddev", "lag1_autocorr"}
        assert cli.main(["transfer", "--artifact", str(art), "--out",
                         str(tmp_path / "p.json")]) == 0
        assert "R_ia" in json.loads((tmp_path / "p.json").read_text())["priors"]

    def test_exit_codes(self, tmp_path, house):
        d, _ = house
        assert cli.main(["fit", "--config", str(tmp_path / "missing.yaml")]) == 1
        bad = _config(tmp_path, d / "hist.csv", priors={"regime": "hyper", "metadata": None})
        assert cli.main(["fit", "--config", str(bad)]) == 1
        broken = write(tmp_path / "broken.csv", "time,y\n0,1\n")
        cfg = _config(tmp_path, broken)
        assert cli.main(["fit", "--config", str(cfg)]) == 2
        with pytest.raises(SystemExit) as info:
            cli.main(["fit"])
        assert info.value.code == 1

    def test_take_flag(self, tmp_path, house):
        d, _ = house
        cfg = _config(tmp_path, d / "hist.csv")
        out = tmp_path / "t"
        assert cli.main(["fit", "--config", str(cfg), "--backend", "map", "--take", "100",
                         "--out", str(out)]) == 0
        assert not os.path.exists(out / "draws.csv")
