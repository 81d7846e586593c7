"""Monte-Carlo forecasts of indoor temperature from parameter draws."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyHistory, MissingExogenous
from .filtering import kalman_loglik
from .thermal_models import ModelKind, ThermalParams, build_matrices


@dataclass
class ForecastResult:
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    exo: np.ndarray
    band_mode: str
    hold_mode: str | None = None
    paths: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.mean.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mean", "low", "high"])
            for k in range(self.horizon):
                w.writerow([k + 1, repr(float(self.mean[k])), repr(float(self.low[k])),
                            repr(float(self.high[k]))])


def parse_band(mode):
    """Normalise ``"minmax"``, ``"quantile"``, ``"quantile(0.1)"`` or ``("quantile", a)``."""
    if isinstance(mode, (tuple, list)):
        name, alpha = mode
        return str(name), float(alpha)
    mode = str(mode).strip().lower()
    if mode == "minmax":
        return "minmax", None
    m = re.fullmatch(r"quantile(?:\(\s*([0-9.eE+-]+)\s*\))?", mode)
    if m is None:
        raise ValueError(f"unknown band mode {mode!r}")
    return "quantile", float(m.group(1)) if m.group(1) else 0.05


def hvac_hold(template, K: int, mode: str = "last-known") -> np.ndarray:
    """Heater/cooler series for ``K`` future steps held at the last known value.

    ``template`` is a dataset or a 1-D history of the HVAC input.
    """
    if mode != "last-known":
        raise ValueError(f"unsupported hold mode {mode!r}")
    hist = np.asarray(template.phi_h if hasattr(template, "phi_h") else template, dtype=float)
    if hist.size == 0:
        raise EmptyHistory("no HVAC history to hold")
    if K < 0:
        raise ValueError("K must be nonnegative")
    return np.full(int(K), hist[-1])


def future_inputs(ta, phi_h, phi_s) -> np.ndarray:
    """Stack future drivers into a ``K x 3`` array, checking lengths."""
    cols = [np.asarray(c, dtype=float).ravel() for c in (ta, phi_h, phi_s)]
    if len({c.size for c in cols}) != 1:
        raise MissingExogenous(
            f"exogenous series lengths differ: {[c.size for c in cols]}")
    return np.column_stack(cols) if cols[0].size else np.empty((0, 3))


def terminal_state(kind, samples, data, fixed=None, m0=None, P0=None):
    """Filtered mean and covariance of the last state at the posterior mean."""
    kind = ModelKind.parse(kind)
    values = {**(fixed or {}), **samples.mean()}
    params = ThermalParams.from_flat(kind, values)
    mats = build_matrices(kind, params, data.dt)
    _, out = kalman_loglik(mats, data, m0, P0)
    return out.mean, out.cov


def forecast(kind, samples, x_T, exo, dt: float, n_draws: int = 1000, band_mode="minmax",
             seed=None, fixed=None, with_noise: bool = True, keep_paths: bool = False,
             clamp=None, hold_mode=None) -> ForecastResult:
    """Roll the model forward ``K = len(exo)`` steps for ``n_draws`` parameter draws.

    Parameters
    ----------
    kind : ModelKind or str
    samples : PosteriorSamples
        Parameter draws; draw ``i`` of the forecast picks one at random.
    x_T : array_like or (mean, cov)
        Last known state: a point of length ``D``, a Gaussian given as
        ``(mean, cov)``, or an ``(M, D)`` array of state draws aligned with
        ``samples.flat()``.
    exo : array_like
        ``K x 3`` future ``(Ta, phi_h, phi_s)``.
    dt : float
        Step in hours.
    band_mode : str
        ``"minmax"`` over draws or ``"quantile(alpha)"`` equal-tailed.
    with_noise : bool
        Add process and observation noise to each path.
    clamp : (low, high), optional
        Clip paths to a thermostat dead-band.  Off by default.

    Each draw uses its own generator seeded from ``(seed, i)``, so the first
    ``n`` paths do not depend on ``n_draws``.
    """
    kind = ModelKind.parse(kind)
    D = kind.n_states
    band, alpha = parse_band(band_mode)
    exo = np.asarray(exo, dtype=float)
    if exo.ndim != 2 or exo.shape[1] != 3:
        raise MissingExogenous(f"exogenous input must be K x 3, got shape {exo.shape}")
    if not np.all(np.isfinite(exo)):
        raise MissingExogenous("exogenous input has missing values")
    if n_draws < 2:
        raise ValueError("n_draws must be at least 2")
    flat = samples.flat()
    if flat.shape[0] == 0:
        raise ValueError("no posterior draws")
    names = samples.names
    K = exo.shape[0]

    if isinstance(x_T, tuple):
        xm, xP = (np.asarray(a, dtype=float) for a in x_T)
        xm = xm.ravel()
        state_mode = "gauss"
    else:
        xm = np.asarray(x_T, dtype=float)
        state_mode = "draws" if xm.ndim == 2 else "point"
        if state_mode == "draws" and xm.shape[0] != flat.shape[0]:
            raise DimensionMismatch("state draws must align with parameter draws")
    if xm.shape[-1] != D:
        raise DimensionMismatch(f"x_T must have {D} components")

    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    paths = np.empty((n_draws, K))
    cache = {}
    for i in range(n_draws):
        rng = np.random.default_rng([seed, i])
        j = int(rng.integers(flat.shape[0]))
        mats = cache.get(j)
        if mats is None:
            values = {**(fixed or {}), **dict(zip(names, flat[j]))}
            mats = cache[j] = build_matrices(kind, ThermalParams.from_flat(kind, values), dt)
        if state_mode == "gauss":
            x = rng.multivariate_normal(xm, xP, method="eigh")
        elif state_mode == "draws":
            x = xm[j].copy()
        else:
            x = xm.copy()
        if with_noise:
            w = rng.standard_normal((K, D)) * np.sqrt(np.diag(mats.Q))
            v = rng.standard_normal(K) * np.sqrt(mats.R_obs)
        A, B = mats.A, mats.B
        for k in range(K):
            x = A @ x + B @ exo[k]
            if with_noise:
                x = x + w[k]
            paths[i, k] = x[0]
        if with_noise:
            paths[i] += v
    if clamp is not None:
        np.clip(paths, clamp[0], clamp[1], out=paths)

    # mean relative to the first path is exact when all paths coincide
    mean = paths[0] + np.mean(paths - paths[0], axis=0)
    if band == "minmax":
        low, high = paths.min(axis=0), paths.max(axis=0)
    else:
        low, high = np.quantile(paths, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")
    return ForecastResult(mean, low, high, exo.copy(),
                          band if alpha is None else f"quantile({alpha:g})", hold_mode,
                          paths if keep_paths else None, {"n_draws": n_draws, "seed": seed})
