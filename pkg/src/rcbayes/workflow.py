"""End-to-end fitting: config to priors, target, backend run and artifact."""

from __future__ import annotations

import logging
import time

import numpy as np

from . import advi, nuts
from .density import build_target, default_priors, prior_from_dict
from .diagnostics import ParamSummary, SummaryReport, summarize
from .errors import ConfigError, NumericalError
from .filtering import fit_point, kalman_loglik, one_step_metrics
from .io import FitArtifact, RunConfig, load_csv, load_mixture, load_transferred
from .thermal_models import ModelKind, ThermalParams, build_matrices
from ._version import __version__

log = logging.getLogger(__name__)


def make_priors(config: RunConfig, kind=None):
    kind = kind or config.kind
    p = config["priors"]
    regime = p["regime"]
    kwargs = {}
    if regime == "hyper":
        kwargs["mixture"] = load_mixture(p["metadata"])
    if regime == "transferred":
        kwargs["transferred"] = load_transferred(p["transferred"])
    priors = default_priors(kind, regime, binary_hvac=bool(config["binary_hvac"]),
                            informed=p["informed"], delta=float(p["delta"]),
                            r_upper=float(p["r_upper"]), informed_sd=float(p["informed_sd"]),
                            fixed={k: float(v) for k, v in (p["fixed"] or {}).items()},
                            **kwargs)
    for name, spec in (p["overrides"] or {}).items():
        priors.priors[name] = prior_from_dict(spec)
    return priors


def start_values(kind, data, names, fixed=None) -> dict:
    """Rough physical starting point for optimisation."""
    kind = ModelKind.parse(kind)
    scale = float(np.std(np.diff(data.y))) or 0.1
    start = {}
    for n in kind.resistances:
        start[n] = 5.0
    for n in kind.capacitances:
        start[n] = 10.0
    start.update({"A_w": 1.0, "phi_h_scale": 1.0})
    for n in kind.noise_names:
        start[n] = scale / 2
    for n in names:
        if n.endswith("_mean") and n[:-5] in start:
            start[n] = start[n[:-5]]
    start.update(fixed or {})
    return {n: start[n] for n in names if n in start}


def _map_init(kind, priors, data, target, fixed, optimizer):
    names = target.layout.names[target.layout.param_slice]
    start = start_values(kind, data, names, fixed)
    try:
        est = fit_point(kind, priors, data, start, mode="MAP", fixed=fixed,
                        max_iter=int(optimizer.get("max_iter", 500)),
                        gtol=float(optimizer.get("gtol", 1e-6)))
    except NumericalError as exc:
        log.warning("MAP initialisation failed (%s); starting at the origin", exc)
        return None
    u = np.zeros(target.dim)
    for i, n in enumerate(names):
        u[i] = target.layout.transforms[i].inverse(est.theta[n])
    if target.layout.state_slice is not None:
        D = target.layout.n_states
        u[target.layout.state_slice] = np.repeat(np.asarray(data.y), D)
    return u


def fit_metrics(kind, samples, data, fixed=None):
    """One-step-ahead RMSE/NRMSE at the posterior mean."""
    values = {**(fixed or {}), **samples.mean()}
    try:
        mats = build_matrices(kind, ThermalParams.from_flat(kind, values), data.dt)
        _, out = kalman_loglik(mats, data)
        rmse, nrmse = one_step_metrics(out, data)
    except Exception as exc:  # metrics are informative only
        log.warning("one-step metrics unavailable: %s", exc)
        return {}
    return {"rmse": rmse, "nrmse_percent": nrmse}


def run_fit(config: RunConfig, data=None) -> FitArtifact:
    """Fit the configured model and return the artifact (not yet saved)."""
    t0 = time.perf_counter()
    kind = config.kind
    if data is None:
        if not config["data"]:
            raise ConfigError("no data path configured")
        data = load_csv(config["data"], dt_hint=config["dt"], unit=config["unit"],
                        binary_hvac=bool(config["binary_hvac"]), take=config["take"])
    elif config["take"]:
        data = data.slice(0, int(config["take"]))
    inf = config["inference"]
    backend = inf["backend"]
    seed = int(config["seed"])
    priors = make_priors(config, kind)
    fixed = dict(priors.fixed)
    opt = inf["optimizer"]

    variational = point = None
    if backend in ("mle", "map"):
        names = [n for n in priors.priors if n not in fixed] if backend == "map" else \
            [n for n in kind.all_names(data.binary_hvac) if n not in fixed]
        est = fit_point(kind, priors if backend == "map" else None, data,
                        start_values(kind, data, names, fixed), mode=backend.upper(),
                        fixed=fixed, max_iter=int(opt.get("max_iter", 500)),
                        gtol=float(opt.get("gtol", 1e-6)))
        point = {"theta": est.theta, "objective": est.objective,
                 "converged": est.converged, "iterations": est.iterations}
        params = {n: ParamSummary(v, 0.0, v, v, None) for n, v in est.theta.items()
                  if n not in fixed}
        fake = nuts.PosteriorSamples(np.array([[[est.theta[n] for n in params]]]), list(params))
        summary = SummaryReport(params, 0, {}, fit_metrics(kind, fake, data, fixed))
        samples = None
    else:
        form = inf["formulation"]
        if form == "auto":
            # mean-field ADVI keeps the states in q; NUTS integrates them out
            form = "latent_states" if backend == "advi" else "marginalized"
        target = build_target(kind, priors, data, formulation=form)
        init = _map_init(kind, priors, data, target, fixed, opt) if inf["init"] == "map" else None
        if backend == "nuts":
            cfg = nuts.NutsConfig(**{"seed": seed, **inf["nuts"]})
            samples = nuts.sample(target, cfg, init=init)
        else:
            cfg = advi.AdviConfig(**{"seed": seed, **inf["advi"]})
            q = advi.fit(target, cfg, init=init)
            samples = advi.draw(q, int(inf["draws"]), seed=seed)
            variational = {"mu": q.mu.tolist(), "omega": q.omega.tolist(),
                           "names": list(q.names), "elbo": q.elbo,
                           "iterations": q.iterations, "converged": q.converged}
        summary = summarize(samples, kind, fit_metrics(kind, samples, data, fixed))
    wall = time.perf_counter() - t0
    return FitArtifact(kind.value, summary, samples, config.raw, backend, __version__,
                       wall, fixed, variational, point)

