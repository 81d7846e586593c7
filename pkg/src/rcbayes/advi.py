"""Mean-field ADVI: a diagonal Gaussian fitted in unconstrained space."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .density import forward_array
from .errors import ConfigError, Diverged, NonFiniteResult
from .nuts import PosteriorSamples

HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass
class AdviConfig:
    """Settings for :func:`fit`.

    ``window`` counts ELBO evaluations, taken every ``eval_every`` steps
    with ``eval_samples`` draws each.  The fit stops once the mean of the
    latest window differs from the window before it by less than
    ``tol * max(|previous mean|, 1)``.
    """

    max_iter: int = 180_000
    mc_samples: int = 1
    eta: float = 0.1
    tau: float = 1.0
    alpha: float = 0.1
    window: int = 100
    tol: float = 1e-4
    seed: int = 0
    eval_every: int = 500
    eval_samples: int = 100

    def __post_init__(self):
        for name in ("max_iter", "mc_samples", "window", "eval_every", "eval_samples"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not (self.eta > 0 and self.tau > 0 and 0 < self.alpha <= 1):
            raise ConfigError("need eta > 0, tau > 0 and 0 < alpha <= 1")


@dataclass
class VariationalPosterior:
    mu: np.ndarray
    omega: np.ndarray
    layout: object
    elbo: float = math.nan
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    iterations: int = 0
    converged: bool = False
    diverged: bool = False

    @property
    def names(self):
        return self.layout.names

    @property
    def sd(self):
        return np.exp(self.omega)

    def entropy(self) -> float:
        return float(np.sum(self.omega) + self.mu.size * HALF_LOG_2PIE)


def elbo_estimate(target, q: VariationalPosterior, n_samples: int, seed=None, z=None) -> float:
    """Monte-Carlo ELBO: mean log target at ``mu + exp(omega) * z`` plus entropy.

    Draws where the target is not finite are skipped; ``NonFiniteResult``
    is raised if all of them are.  ``z`` may be passed to reuse a fixed
    set of standard normal draws.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be at least 1")
    if z is None:
        z = np.random.default_rng(seed).standard_normal((n_samples, q.mu.size))
    sd = np.exp(q.omega)
    vals = [target.log_density(q.mu + sd * zi) for zi in z]
    vals = np.asarray(vals)
    ok = np.isfinite(vals)
    if not ok.any():
        raise NonFiniteResult("target was not finite at any ELBO draw")
    return float(vals[ok].mean()) + q.entropy()


def _evaluation_draws(n, dim, seed):
    # antithetic pairs rescaled to unit second moment: the fixed draws then
    # reproduce the first two moments of q exactly, so the traced ELBO has
    # its optimum where the true one is for Gaussian targets
    half = np.random.default_rng([seed, 1]).standard_normal(((n + 1) // 2, dim))
    z = np.concatenate([half, -half])[:n]
    if n > 1:
        z = z / np.sqrt(np.mean(z * z, axis=0))
    return z


def fit(target, config: AdviConfig | None = None, init=None) -> VariationalPosterior:
    """Stochastic ELBO ascent with reparameterised gradients.

    Step sizes follow the adaptive per-coordinate rule
    ``eta * k**(-1/2) / (tau + sqrt(s_k))`` where ``s_k`` is an exponential
    moving average (weight ``alpha``) of squared gradients.

    The returned mean and log-scales are the average of the iterates
    recorded at the evaluations of the final window.

    ``init`` sets the starting mean (origin by default); log-scales start at 0.
    """
    cfg = config or AdviConfig()
    dim = target.dim
    mu = np.zeros(dim) if init is None else np.array(init, dtype=float)
    omega = np.zeros(dim)
    rng = np.random.default_rng(cfg.seed)
    z_eval = _evaluation_draws(cfg.eval_samples, dim, cfg.seed)
    q = VariationalPosterior(mu, omega, target.layout)

    s_mu = s_om = None
    trace = []
    iterates = []
    best = (-math.inf, mu.copy(), omega.copy())
    bad_evals = 0
    converged = diverged = False
    block = 1024
    zbuf = np.empty((0, cfg.mc_samples, dim))
    k = 0
    for k in range(1, cfg.max_iter + 1):
        j = (k - 1) % block
        if j == 0:
            zbuf = rng.standard_normal((block, cfg.mc_samples, dim))
        sd = np.exp(omega)
        g_mu = np.zeros(dim)
        g_om = np.zeros(dim)
        n_ok = 0
        for z in zbuf[j]:
            _, g = target.log_density_and_grad(mu + sd * z)
            if g is None:
                continue
            n_ok += 1
            g_mu += g
            g_om += g * z * sd
        if n_ok:
            g_mu /= n_ok
            g_om = g_om / n_ok + 1.0
            if s_mu is None:
                s_mu, s_om = g_mu ** 2, g_om ** 2
            else:
                s_mu = cfg.alpha * g_mu ** 2 + (1 - cfg.alpha) * s_mu
                s_om = cfg.alpha * g_om ** 2 + (1 - cfg.alpha) * s_om
            scale = cfg.eta * k ** (-0.5 + 1e-16)
            mu = mu + scale / (cfg.tau + np.sqrt(s_mu)) * g_mu
            omega = omega + scale / (cfg.tau + np.sqrt(s_om)) * g_om

        if k % cfg.eval_every and k != cfg.max_iter:
            continue
        q.mu, q.omega = mu, omega
        finite = np.all(np.isfinite(mu)) and np.all(np.isfinite(omega))
        try:
            elbo = elbo_estimate(target, q, cfg.eval_samples, z=z_eval) if finite else -math.inf
        except NonFiniteResult:
            elbo = -math.inf
        trace.append((k, elbo))
        iterates.append((mu.copy(), omega.copy()))
        if elbo > best[0]:
            best = (elbo, mu.copy(), omega.copy())
        if not math.isfinite(elbo):
            bad_evals += 1
            if bad_evals >= 3 or not finite:
                diverged = True
                break
            continue
        bad_evals = 0
        w = cfg.window
        if len(trace) >= 2 * w:
            recent = np.array([e for _, e in trace[-w:]])
            prev = np.array([e for _, e in trace[-2 * w:-w]])
            if np.all(np.isfinite(recent)) and np.all(np.isfinite(prev)):
                new, old = recent.mean(), prev.mean()
                if abs(new - old) < cfg.tol * max(abs(old), 1.0):
                    converged = True
                    break

    if diverged:
        warnings.warn(Diverged("ELBO became non-finite; returning the best iterate"),
                      stacklevel=2)
        elbo, mu, omega = best
    else:
        # average the iterates of the last window to damp SGD jitter
        tail = iterates[-cfg.window:]
        mu = np.mean([m for m, _ in tail], axis=0)
        omega = np.mean([o for _, o in tail], axis=0)
        q.mu, q.omega = mu, omega
        try:
            elbo = elbo_estimate(target, q, cfg.eval_samples, z=z_eval)
        except NonFiniteResult:
            elbo = float(trace[-1][1])
    return VariationalPosterior(mu, omega, target.layout, elbo=elbo,
                                trace=np.asarray(trace, dtype=float).reshape(-1, 2),
                                iterations=k, converged=converged, diverged=diverged)


def elbo_trend(trace) -> float:
    """Spearman correlation of windowed ELBO means with window index.

    Windows double in length (1, 1, 2, 4, ... evaluations), so the trend is
    read on a log-time axis, which suits decaying step sizes.
    """
    e = np.asarray(trace, dtype=float)
    e = e[:, 1] if e.ndim == 2 else e
    edges = [0, 1]
    while edges[-1] < e.size:
        edges.append(2 * edges[-1])
    means = [e[a:b].mean() for a, b in zip(edges[:-1], edges[1:]) if a < e.size]
    if len(means) < 3:
        raise ValueError("trace too short for a trend")
    return float(stats.spearmanr(np.arange(len(means)), means)[0])


def draw(q: VariationalPosterior, n: int, seed=None) -> PosteriorSamples:
    """``n`` draws from ``q`` mapped to constrained space, as one chain."""
    if n < 1:
        raise ConfigError("need at least one draw")
    rng = np.random.default_rng(seed)
    u = q.mu + np.exp(q.omega) * rng.standard_normal((n, q.mu.size))
    theta = u.copy()
    for i, t in enumerate(q.layout.transforms):
        theta[:, i] = forward_array(t, u[:, i])
    return PosteriorSamples(theta[None], q.layout.names,
                            meta={"backend": "advi", "iterations": q.iterations})
