"""CSV ingestion, synthetic data, run configuration and fit artifacts."""

from __future__ import annotations

import copy
import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources

import numpy as np
import yaml

from .diagnostics import SummaryReport
from .errors import (ConfigError, DataError, MissingColumn, NonUniformSampling,
                     ParseError)
from .nuts import PosteriorSamples
from .thermal_models import (ModelKind, ThermalParams, TimeSeriesDataset,
                             build_matrices, simulate)

COLUMNS = ("time", "y", "ta", "phi_h", "phi_s")


# ---------------------------------------------------------------------------
# CSV

def _parse_time(text, row):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(f"row {row}, column 'time': cannot parse {text!r}") from None
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.timestamp()


def f_to_c(x):
    return (np.asarray(x, dtype=float) - 32.0) * 5.0 / 9.0


def load_csv(path, dt_hint=None, unit="c", binary_hvac=False, take=None,
             required=COLUMNS) -> TimeSeriesDataset:
    """Read ``time,y,ta,phi_h,phi_s`` rows into a dataset.

    ``time`` is ISO-8601 or epoch seconds.  Temperatures are converted from
    Fahrenheit when ``unit="f"``.  ``take`` keeps the first rows only.
    ``dt_hint`` (hours) is checked against the sampling interval found.
    """
    unit = unit.lower()
    if unit not in ("c", "f"):
        raise ConfigError(f"unit must be 'c' or 'f', got {unit!r}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        for col in required:
            if col not in header:
                raise MissingColumn(col)
        cols = {c: [] for c in required}
        for i, rec in enumerate(reader, start=2):
            if take is not None and len(cols["time"]) >= take:
                break
            for c in required:
                raw = rec.get(c)
                if raw is None or raw.strip() == "":
                    raise ParseError(f"row {i}, column {c!r}: missing value")
                if c == "time":
                    cols[c].append(_parse_time(raw, i))
                    continue
                try:
                    cols[c].append(float(raw))
                except ValueError:
                    raise ParseError(f"row {i}, column {c!r}: not a number: {raw!r}") from None
    t = np.asarray(cols["time"])
    if t.size == 0:
        raise DataError(f"{path} has no data rows")
    hours = (t - t[0]) / 3600.0
    data = {c: np.asarray(v) for c, v in cols.items() if c != "time"}
    if unit == "f":
        for c in ("y", "ta"):
            if c in data:
                data[c] = f_to_c(data[c])
    meta = {"source": os.fspath(path), "t0": float(t[0])}
    if "y" not in data:
        data["y"] = np.zeros(t.size)
    ds = TimeSeriesDataset(hours, data["y"], data["ta"], data["phi_h"], data["phi_s"],
                           binary_hvac=binary_hvac, meta=meta)
    if dt_hint is not None and not math.isclose(ds.dt, float(dt_hint), rel_tol=1e-6):
        raise NonUniformSampling(f"sampling interval {ds.dt} h differs from dt hint {dt_hint} h")
    return ds


def write_csv(data: TimeSeriesDataset, path):
    """Write a dataset with epoch-second timestamps."""
    t0 = float(data.meta.get("t0", 0.0))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for row in zip(data.timestamps, data.y, data.ta, data.phi_h, data.phi_s):
            w.writerow([repr(t0 + 3600.0 * float(row[0]))] + [repr(float(v)) for v in row[1:]])


# ---------------------------------------------------------------------------
# synthetic data

@dataclass
class DriverSpec:
    """Shape of the synthetic exogenous drivers.

    ``season="heating"`` runs a heater of ``power`` kW, ``"cooling"`` a
    cooler drawing ``-power`` kW.  The HVAC follows a hysteresis thermostat
    around ``setpoint`` on a noiseless pre-pass so it stays exogenous.
    """

    season: str = "heating"
    ta_mean: float | None = None
    ta_amp: float = 5.0
    setpoint: float | None = None
    deadband: float = 1.0
    power: float = 6.0
    solar_peak: float = 0.5
    sunrise: float = 6.0
    sunset: float = 18.0

    def __post_init__(self):
        if self.season not in ("heating", "cooling"):
            raise ConfigError(f"season must be heating or cooling, got {self.season!r}")
        heating = self.season == "heating"
        if self.ta_mean is None:
            self.ta_mean = 5.0 if heating else 30.0
        if self.setpoint is None:
            self.setpoint = 20.0 if heating else 23.0


def _drivers(spec: DriverSpec, t):
    hour = np.mod(t, 24.0)
    ta = spec.ta_mean + spec.ta_amp * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
    day = (hour > spec.sunrise) & (hour < spec.sunset)
    phase = (hour - spec.sunrise) / (spec.sunset - spec.sunrise)
    phi_s = np.where(day, spec.solar_peak * np.sin(np.pi * phase), 0.0)
    return ta, np.maximum(phi_s, 0.0)


def generate_synthetic(kind, params: ThermalParams, N: int, dt: float = 0.5, seed=None,
                       drivers: DriverSpec | None = None, x0=None, start_hour: float = 0.0):
    """Simulate a house under ``params`` with generated drivers.

    Returns ``(dataset, params)``.  The same seed gives the same dataset.
    """
    kind = ModelKind.parse(kind)
    if N < 2:
        raise ConfigError("N must be at least 2")
    spec = drivers or DriverSpec()
    t = start_hour + dt * np.arange(N)
    ta, phi_s = _drivers(spec, t)
    binary = params.phi_h_scale is not None
    mats = build_matrices(kind, params, dt)
    D = kind.n_states
    x0 = np.full(D, spec.setpoint) if x0 is None else np.asarray(x0, dtype=float)

    # thermostat on the noiseless house
    sign = 1.0 if spec.season == "heating" else -1.0
    level = 1.0 if binary else spec.power
    lo, hi = spec.setpoint - spec.deadband / 2, spec.setpoint + spec.deadband / 2
    phi_h = np.zeros(N)
    x = x0.copy()
    on = False
    for n in range(1, N):
        if sign > 0:
            on = x[0] < lo or (on and x[0] < hi)
        else:
            on = x[0] > hi or (on and x[0] > lo)
        phi_h[n] = sign * level if on else 0.0
        x = mats.A @ x + mats.B @ np.array([ta[n], phi_h[n], phi_s[n]])

    inputs = np.column_stack([ta, phi_h, phi_s])
    noisy = any(params.sigma) or params.sigma_obs > 0
    states, obs = simulate(mats, inputs, x0, seed=seed, with_noise=noisy)
    meta = {"synthetic": True, "seed": seed, "season": spec.season, "states": states}
    ds = TimeSeriesDataset(t - t[0], obs[0], ta, phi_h, phi_s, binary_hvac=binary, meta=meta)
    return ds, params


# ---------------------------------------------------------------------------
# configuration

DEFAULT_CONFIG = {
    "model": "Ti",
    "data": None,
    "take": None,
    "dt": None,
    "unit": "c",
    "binary_hvac": False,
    "seed": 0,
    "output": "rcbayes-out",
    "priors": {
        "regime": "uninformed",
        "informed": None,
        "metadata": "default",
        "transferred": None,
        "overrides": {},
        "fixed": {},
        "delta": 0.001,
        "r_upper": 70.0,
        "informed_sd": 1.0,
    },
    "inference": {
        "backend": "nuts",
        "formulation": "auto",
        "init": "map",
        "draws": 1000,
        "nuts": {},
        "advi": {},
        "optimizer": {"max_iter": 500, "gtol": 1e-6},
    },
    "forecast": {"horizon": 144, "n_draws": 1000, "band": "minmax"},
}

BACKENDS = ("nuts", "advi", "mle", "map")
REGIMES = ("uninformed", "informed", "hyper", "transferred")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_mixture(path="default") -> dict:
    """Lognormal mixture over R-values for the hyper prior."""
    if path is None:
        raise ConfigError("hyper priors need a mixture metadata file")
    if path == "default":
        text = resources.files("rcbayes").joinpath("data/rvalue_mixture.json").read_text()
    else:
        if not os.path.exists(path):
            raise ConfigError(f"mixture metadata file {path!r} does not exist")
        with open(path) as fh:
            text = fh.read()
    try:
        mix = json.loads(text)
        return {"weights": [float(w) for w in mix["weights"]],
                "mus": [float(m) for m in mix["mus"]],
                "sigmas": [float(s) for s in mix["sigmas"]]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad mixture metadata: {exc}") from exc


@dataclass
class RunConfig:
    """Experiment record: model, priors, backend, data and seed."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    def __post_init__(self):
        self.raw = _merge(DEFAULT_CONFIG, self.raw)
        self.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} not found") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return cls(raw)

    def validate(self):
        r = self.raw
        try:
            ModelKind.parse(r["model"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        p, inf = r["priors"], r["inference"]
        if p["regime"] not in REGIMES:
            raise ConfigError(f"prior regime must be one of {REGIMES}, got {p['regime']!r}")
        if inf["backend"] not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {inf['backend']!r}")
        if inf["formulation"] not in ("auto", "marginalized", "latent_states"):
            raise ConfigError(f"unknown formulation {inf['formulation']!r}")
        if inf["init"] not in ("map", "origin"):
            raise ConfigError("inference.init must be 'map' or 'origin'")
        if p["regime"] == "informed" and p["informed"] is None:
            raise ConfigError("informed priors need audit values under priors.informed")
        if p["regime"] == "hyper":
            meta = p["metadata"]
            if meta is None or (meta != "default" and not os.path.exists(str(meta))):
                raise ConfigError(f"hyper priors need a mixture metadata file (got {meta!r})")
        if p["regime"] == "transferred":
            src = p["transferred"]
            if not src or not os.path.exists(str(src)):
                raise ConfigError(f"transferred priors need an existing prior file (got {src!r})")
        for key in ("nuts", "advi", "optimizer"):
            if not isinstance(inf[key], dict):
                raise ConfigError(f"inference.{key} must be a mapping")

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def kind(self):
        return ModelKind.parse(self.raw["model"])

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)


# ---------------------------------------------------------------------------
# artifacts

@dataclass
class FitArtifact:
    """Everything a fit produced; stored as ``artifact.json`` plus ``draws.csv``."""

    kind: str
    summary: SummaryReport
    samples: PosteriorSamples | None
    config: dict
    backend: str
    version: str
    wall_seconds: float
    fixed: dict = field(default_factory=dict)
    variational: dict | None = None
    point: dict | None = None

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        doc = {
            "kind": self.kind,
            "backend": self.backend,
            "version": self.version,
            "wall_seconds": self.wall_seconds,
            "config": self.config,
            "fixed": self.fixed,
            "summary": self.summary.to_dict(),
            "variational": self.variational,
            "point": self.point,
        }
        with open(os.path.join(directory, "artifact.json"), "w") as fh:
            json.dump(doc, fh, indent=2)
        if self.samples is not None:
            write_draws(self.samples, os.path.join(directory, "draws.csv"))

    @classmethod
    def load(cls, directory) -> "FitArtifact":
        path = os.path.join(directory, "artifact.json")
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"no artifact at {directory!r}") from None
        draws_path = os.path.join(directory, "draws.csv")
        samples = read_draws(draws_path) if os.path.exists(draws_path) else None
        return cls(doc["kind"], SummaryReport.from_dict(doc["summary"]), samples,
                   doc["config"], doc["backend"], doc["version"], doc["wall_seconds"],
                   doc.get("fixed") or {}, doc.get("variational"), doc.get("point"))


def write_draws(samples: PosteriorSamples, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "draw", *samples.names])
        for c in range(samples.n_chains):
            for d in range(samples.n_draws):
                w.writerow([c, d, *(repr(float(v)) for v in samples.draws[c, d])])


def read_draws(path) -> PosteriorSamples:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    arr = np.asarray(rows)
    names = header[2:]
    chains = int(arr[:, 0].max()) + 1 if arr.size else 0
    draws = arr[:, 2:].reshape(chains, -1, len(names))
    return PosteriorSamples(draws, names)


def transfer_priors(artifact: FitArtifact, inflate: float = 1.0, names=None) -> dict:
    """Prior file contents: ``Normal(mean, inflate * sd)`` per summarised parameter."""
    if not inflate > 0:
        raise ConfigError("inflate must be positive")
    out = {}
    for name, s in artifact.summary.params.items():
        if names is not None and name not in names:
            continue
        if not s.sd > 0:
            raise ConfigError(f"no posterior spread for {name}; transfer needs nuts or advi draws")
        out[name] = {"family": "normal", "mu": s.mean, "sigma": s.sd * inflate}
    return {"priors": out, "source": {"kind": artifact.kind, "backend": artifact.backend}}


def load_transferred(path) -> dict:
    """``{name: (mu, sigma)}`` from a prior file written by :func:`transfer_priors`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        return {k: (float(v["mu"]), float(v["sigma"])) for k, v in doc["priors"].items()}
    except FileNotFoundError:
        raise ConfigError(f"prior file {path!r} not found") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad prior file {path!r}: {exc}") from exc
