"""Convergence diagnostics, credible intervals, predictive checks and error metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, ZeroObservation, ZeroWithinVariance
from .thermal_models import ModelKind, ThermalParams, build_matrices, composite_rc, simulate


def gelman_rubin(chains, split: bool = False) -> float:
    """Potential scale reduction factor of ``chains`` (shape ``(m, n)``).

    ``R = sqrt(((n-1)/n W + B/n) / W)`` with ``W`` the mean within-chain
    variance and ``B`` the variance of the chain means times ``n``.  With
    ``split`` each chain is first cut into two halves.

    >>> round(gelman_rubin([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]]), 6)
    0.816497
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("chains must be a (chains, draws) array")
    if split:
        half = x.shape[1] // 2
        x = np.concatenate([x[:, :half], x[:, x.shape[1] - half:]])
    m, n = x.shape
    if m < 2 or n < 2:
        raise DimensionMismatch("need at least 2 chains of at least 2 draws")
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    if W == 0:
        raise ZeroWithinVariance("every chain is constant")
    B = n * float(np.var(np.mean(x, axis=1), ddof=1))
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def credible_interval(samples, alpha: float = 0.05):
    """Equal-tailed ``1 - alpha`` interval with linearly interpolated quantiles."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise DimensionMismatch("need at least 2 samples")
    lo, hi = np.quantile(s, [alpha / 2, 1 - alpha / 2], method="linear")
    return float(lo), float(hi)


def mape(y, yhat) -> float:
    """Mean absolute percentage error, as a fraction."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch("y and yhat differ in shape")
    if np.any(y == 0):
        raise ZeroObservation("MAPE is undefined when an observation is zero")
    return float(np.mean(np.abs(y - yhat) / np.abs(y)))


def interval_coverage(y, low, high) -> float:
    """Percentage of points with ``low <= y <= high``."""
    y, low, high = (np.asarray(a, dtype=float) for a in (y, low, high))
    if not y.shape == low.shape == high.shape:
        raise DimensionMismatch("y and band differ in shape")
    if np.any(low > high):
        raise ValueError("band has low > high")
    return 100.0 * float(np.mean((low <= y) & (y <= high)))


# ---------------------------------------------------------------------------
# posterior predictive checks

def _lag1(x):
    d = x - x.mean()
    den = float(d @ d)
    return float(d[1:] @ d[:-1]) / den if den > 0 else 0.0


STATISTICS = {
    "mean": lambda x: float(np.mean(x)),
    "stddev": lambda x: float(np.std(x)),
    "lag1_autocorr": _lag1,
}


def posterior_predictive_check(kind, samples, data, statistics=("mean", "stddev", "lag1_autocorr"),
                               n_rep: int = 200, seed=None, x0=None, fixed=None):
    """Bayesian p-values ``P(T(y_rep) >= T(y))`` for each statistic.

    Each replicate draws a parameter vector from ``samples`` and simulates
    the model with noise on the observed drivers.  The initial state is
    ``x0`` when given, else the first observation for every state.
    ``fixed`` supplies parameters that were not sampled.
    """
    kind = ModelKind.parse(kind)
    if n_rep < 100:
        raise ValueError("n_rep must be at least 100")
    unknown = set(statistics) - set(STATISTICS)
    if unknown:
        raise ValueError(f"unknown statistics {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    flat = samples.flat()
    names = samples.names
    inputs = data.inputs
    start = np.full(kind.n_states, data.y[0]) if x0 is None else np.asarray(x0, float)
    observed = {s: STATISTICS[s](data.y) for s in statistics}
    hits = {s: 0 for s in statistics}
    for _ in range(n_rep):
        row = flat[rng.integers(flat.shape[0])]
        values = {**(fixed or {}), **dict(zip(names, row))}
        params = ThermalParams.from_flat(kind, values)
        mats = build_matrices(kind, params, data.dt)
        _, obs = simulate(mats, inputs, start, seed=int(rng.integers(2**32)), with_noise=True)
        for s in statistics:
            hits[s] += STATISTICS[s](obs[0]) >= observed[s]
    return {s: hits[s] / n_rep for s in statistics}


# ---------------------------------------------------------------------------
# summaries

@dataclass
class ParamSummary:
    mean: float
    sd: float
    l95: float
    u95: float
    rhat: float | None = None


@dataclass
class SummaryReport:
    """Posterior summary table.  ``sd`` is a standard deviation, not a variance."""

    params: dict
    divergences: int = 0
    composite: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameters": {k: asdict(v) for k, v in self.params.items()},
            "divergences": self.divergences,
            "composite": {k: asdict(v) for k, v in self.composite.items()},
            "metrics": dict(self.metrics),
        }

    @classmethod
    def from_dict(cls, d) -> "SummaryReport":
        return cls({k: ParamSummary(**v) for k, v in d["parameters"].items()},
                   int(d.get("divergences", 0)),
                   {k: ParamSummary(**v) for k, v in d.get("composite", {}).items()},
                   dict(d.get("metrics", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _summ(chains, alpha=0.05):
    x = np.asarray(chains, dtype=float)
    flat = x.ravel()
    lo, hi = credible_interval(flat, alpha)
    rhat = None
    if x.ndim == 2 and x.shape[0] >= 2 and x.shape[1] >= 2:
        try:
            rhat = gelman_rubin(x)
        except ZeroWithinVariance:
            rhat = None
    return ParamSummary(float(flat.mean()), float(flat.std(ddof=1)), lo, hi, rhat)


def summarize(samples, kind=None, metrics=None, alpha: float = 0.05) -> SummaryReport:
    """Mean, standard deviation, credible interval and R-hat per parameter.

    Latent state coordinates are skipped.  With ``kind`` the composite
    total resistance and capacitance are summarised as well.
    """
    params = {}
    for name in samples.names:
        if name.startswith("x["):
            continue
        params[name] = _summ(samples.chains(name), alpha)
    composite = {}
    if kind is not None:
        total_r, total_c = composite_rc(kind, samples)
        shape = samples.draws.shape[:2]
        composite = {"totalR": _summ(np.reshape(total_r, shape), alpha),
                     "totalC": _summ(np.reshape(total_c, shape), alpha)}
    return SummaryReport(params, samples.n_divergent, composite, dict(metrics or {}))
