"""No-U-Turn Hamiltonian Monte Carlo with dual-averaging step-size adaptation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AllDivergent, ConfigError, InitFailure

MAX_DELTA_H = 1000.0

# dual averaging constants
GAMMA = 0.05
T0 = 10.0
KAPPA = 0.75


@dataclass
class NutsConfig:
    chains: int = 4
    warmup: int = 5000
    draws: int = 5000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    step_size: float = 1.0
    mass: str = "diagonal"
    jitter: float = 0.1

    def __post_init__(self):
        for name in ("chains", "draws", "max_tree_depth"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be nonnegative")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        if self.mass not in ("identity", "diagonal"):
            raise ConfigError(f"mass must be 'identity' or 'diagonal', got {self.mass!r}")


@dataclass
class PosteriorSamples:
    """Draws in constrained space, shaped ``(chains, draws, dim)``."""

    draws: np.ndarray
    names: tuple
    tree_depth: np.ndarray | None = None
    divergent: np.ndarray | None = None
    accept_stat: np.ndarray | None = None
    step_size: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3:
            raise ValueError("draws must be (chains, draws, dim)")
        self.names = tuple(self.names)
        if len(self.names) != self.draws.shape[2]:
            raise ValueError("names do not match the draw dimension")

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    @property
    def n_divergent(self):
        return 0 if self.divergent is None else int(np.sum(self.divergent))

    def param(self, name) -> np.ndarray:
        """All draws of ``name`` pooled over chains."""
        return self.chains(name).ravel()

    def chains(self, name) -> np.ndarray:
        """Draws of ``name`` shaped ``(chains, draws)``."""
        try:
            i = self.names.index(name)
        except ValueError:
            raise KeyError(name) from None
        return self.draws[:, :, i]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[2])

    def mean(self) -> dict:
        m = self.flat().mean(axis=0)
        return {n: float(v) for n, v in zip(self.names, m)}

    def point(self, i) -> dict:
        """Flat draw ``i`` (chain-major) as a name mapping."""
        row = self.flat()[i]
        return {n: float(v) for n, v in zip(self.names, row)}

    def __contains__(self, name):
        return name in self.names


def leapfrog(target, u, p, eps, grad=None, inv_mass=None):
    """One half-kick / drift / half-kick step on ``H = -log p(u) + p'Mp/2``.

    Returns ``(u', p', logp', grad')``; ``logp'`` is ``-inf`` and ``grad'``
    None when the target is not finite at ``u'``.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    if grad is None:
        _, grad = target.log_density_and_grad(u)
        if grad is None:
            raise ValueError("gradient is not finite at the starting point")
    p = p + 0.5 * eps * grad
    u = u + eps * (p if inv_mass is None else inv_mass * p)
    logp, g = target.log_density_and_grad(u)
    if g is None:
        return u, p, -math.inf, None
    return u, p + 0.5 * eps * g, logp, g


@dataclass
class _Tree:
    u_left: np.ndarray
    p_left: np.ndarray
    g_left: np.ndarray
    u_right: np.ndarray
    p_right: np.ndarray
    g_right: np.ndarray
    ps_left: np.ndarray
    ps_right: np.ndarray
    rho: np.ndarray
    logw: float
    sample: tuple
    n_steps: int
    sum_accept: float
    diverged: bool = False
    turning: bool = False


def _no_uturn(rho, ps_left, ps_right):
    return float(ps_left @ rho) > 0 and float(ps_right @ rho) > 0


class _Chain:
    def __init__(self, target, cfg, rng, inv_mass):
        self.target = target
        self.cfg = cfg
        self.rng = rng
        self.inv_mass = inv_mass

    def kinetic(self, p):
        # a runaway trajectory can overflow; inf then reads as a divergence
        with np.errstate(over="ignore", invalid="ignore"):
            return 0.5 * float(p @ (self.inv_mass * p))

    def leaf(self, u, p, g, eps, H0):
        u, p, logp, g = leapfrog(self.target, u, p, eps, g, self.inv_mass)
        if g is None:
            H = math.inf
        else:
            H = -logp + self.kinetic(p)
            if not math.isfinite(H):
                H = math.inf
        diverged = H - H0 > MAX_DELTA_H
        logw = H0 - H
        ps = self.inv_mass * p
        return _Tree(u, p, g, u, p, g, ps, ps, p.copy(), logw, (u, logp, g), 1,
                     min(1.0, math.exp(min(logw, 0.0))), diverged=diverged)

    def build(self, u, p, g, direction, depth, eps, H0):
        if depth == 0:
            return self.leaf(u, p, g, direction * eps, H0)
        first = self.build(u, p, g, direction, depth - 1, eps, H0)
        if first.diverged or first.turning:
            return first
        if direction > 0:
            second = self.build(first.u_right, first.p_right, first.g_right,
                                direction, depth - 1, eps, H0)
        else:
            second = self.build(first.u_left, first.p_left, first.g_left,
                                direction, depth - 1, eps, H0)
        n_steps = first.n_steps + second.n_steps
        sum_accept = first.sum_accept + second.sum_accept
        if second.diverged or second.turning:
            second.n_steps, second.sum_accept = n_steps, sum_accept
            return second
        logw = np.logaddexp(first.logw, second.logw)
        sample = first.sample
        if math.log(self.rng.uniform()) < second.logw - logw:
            sample = second.sample
        left, right = (first, second) if direction > 0 else (second, first)
        return self.merge(left, right, logw, sample, n_steps, sum_accept)

    def merge(self, left, right, logw, sample, n_steps, sum_accept):
        rho = left.rho + right.rho
        turning = not _no_uturn(rho, left.ps_left, right.ps_right)
        # extra checks across the seam catch U-turns hidden inside subtrees
        if not turning:
            turning = not _no_uturn(left.rho + right.p_left, left.ps_left, right.ps_left)
        if not turning:
            turning = not _no_uturn(left.p_right + right.rho, left.ps_right, right.ps_right)
        return _Tree(left.u_left, left.p_left, left.g_left,
                     right.u_right, right.p_right, right.g_right,
                     left.ps_left, right.ps_right, rho, logw, sample,
                     n_steps, sum_accept, turning=turning)

    def transition(self, u, logp, g, eps):
        rng = self.rng
        p = rng.standard_normal(u.size) / np.sqrt(self.inv_mass)
        H0 = -logp + self.kinetic(p)
        ps = self.inv_mass * p
        tree = _Tree(u, p, g, u, p, g, ps, ps, p.copy(), 0.0, (u, logp, g), 0, 0.0)
        depth = 0
        diverged = False
        n_steps, sum_accept = 0, 0.0
        while depth < self.cfg.max_tree_depth:
            direction = 1 if rng.uniform() < 0.5 else -1
            if direction > 0:
                sub = self.build(tree.u_right, tree.p_right, tree.g_right, 1, depth, eps, H0)
            else:
                sub = self.build(tree.u_left, tree.p_left, tree.g_left, -1, depth, eps, H0)
            n_steps += sub.n_steps
            sum_accept += sub.sum_accept
            depth += 1
            if sub.diverged:
                diverged = True
                break
            if sub.turning:
                break
            # biased progressive sampling favours the newer subtree
            sample = tree.sample
            if math.log(rng.uniform()) < sub.logw - tree.logw:
                sample = sub.sample
            logw = np.logaddexp(tree.logw, sub.logw)
            left, right = (tree, sub) if direction > 0 else (sub, tree)
            tree = self.merge(left, right, logw, sample, 0, 0.0)
            if tree.turning:
                break
        u_new, logp_new, g_new = tree.sample
        accept = sum_accept / max(n_steps, 1)
        return u_new, logp_new, g_new, depth, diverged, accept


def find_reasonable_epsilon(target, u, logp, g, inv_mass, rng, eps=1.0):
    """Double or halve ``eps`` until one leapfrog step crosses acceptance 1/2."""
    p = rng.standard_normal(u.size) / np.sqrt(inv_mass)
    H0 = -logp + 0.5 * float(p @ (inv_mass * p))

    def log_ratio(e):
        _, p1, lp1, g1 = leapfrog(target, u, p, e, g, inv_mass)
        if g1 is None:
            return -math.inf
        val = H0 - (-lp1 + 0.5 * float(p1 @ (inv_mass * p1)))
        return val if math.isfinite(val) else -math.inf

    lr = log_ratio(eps)
    direction = 1.0 if lr > math.log(0.5) else -1.0
    for _ in range(100):
        if direction > 0 and not lr > math.log(0.5):
            break
        if direction < 0 and not lr < math.log(0.5):
            break
        eps = eps * 2.0 ** direction
        lr = log_ratio(eps)
    return eps if direction < 0 else eps / 2.0


class DualAveraging:
    def __init__(self, eps, delta):
        self.restart(eps)
        self.delta = delta

    def restart(self, eps):
        self.mu = math.log(10.0 * eps)
        self.hbar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0
        self.log_eps = math.log(eps)

    def update(self, accept):
        self.m += 1
        m = self.m
        eta = 1.0 / (m + T0)
        self.hbar = (1 - eta) * self.hbar + eta * (self.delta - accept)
        self.log_eps = self.mu - math.sqrt(m) / GAMMA * self.hbar
        w = m ** -KAPPA
        self.log_eps_bar = w * self.log_eps + (1 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _mass_windows(warmup):
    # two slow windows in the middle of warmup; the rest tunes the step size
    if warmup < 20:
        return []
    a, b, c = int(0.15 * warmup), int(0.5 * warmup), int(0.9 * warmup)
    return [(a, b), (b, c)]


def _initial_point(target, init, cfg, rng):
    base = np.zeros(target.dim) if init is None else np.asarray(init, dtype=float)
    for _ in range(100):
        u = base + rng.uniform(-cfg.jitter, cfg.jitter, size=target.dim)
        logp, g = target.log_density_and_grad(u)
        if g is not None and math.isfinite(logp):
            return u, logp, g
    raise InitFailure("no finite starting point found within 100 jittered attempts")


def run_chain(target, cfg: NutsConfig, chain: int, init=None):
    """One chain: warmup with adaptation, then ``cfg.draws`` kept draws.

    Returns unconstrained draws and per-draw diagnostics.
    """
    rng = np.random.default_rng(cfg.seed + chain)
    u, logp, g = _initial_point(target, init, cfg, rng)
    inv_mass = np.ones(target.dim)
    eps = find_reasonable_epsilon(target, u, logp, g, inv_mass, rng, cfg.step_size)
    da = DualAveraging(eps, cfg.target_accept)
    sampler = _Chain(target, cfg, rng, inv_mass)
    windows = _mass_windows(cfg.warmup) if cfg.mass == "diagonal" else []
    window_draws = []
    for it in range(cfg.warmup):
        u, logp, g, _, _, accept = sampler.transition(u, logp, g, eps)
        eps = da.update(accept)
        for start, stop in windows:
            if start <= it < stop:
                window_draws.append(u)
            if it == stop - 1:
                w = np.asarray(window_draws)
                n = len(w)
                var = w.var(axis=0, ddof=1) if n > 1 else np.ones(target.dim)
                # shrink towards a small constant, as in Stan
                sampler.inv_mass = inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                window_draws = []
                eps = find_reasonable_epsilon(target, u, logp, g, inv_mass, rng, eps)
                da.restart(eps)
    if cfg.warmup > 0:
        eps = da.final
    out = np.empty((cfg.draws, target.dim))
    depth = np.empty(cfg.draws, dtype=np.int16)
    div = np.empty(cfg.draws, dtype=bool)
    acc = np.empty(cfg.draws)
    for i in range(cfg.draws):
        u, logp, g, depth[i], div[i], acc[i] = sampler.transition(u, logp, g, eps)
        out[i] = u
    return out, depth, div, acc, eps


def sample(target, config: NutsConfig | None = None, init=None) -> PosteriorSamples:
    """Draw from ``target`` with NUTS.

    Parameters
    ----------
    target : TargetDensity
        Anything with ``dim``, ``log_density_and_grad`` and ``constrain``.
    config : NutsConfig
    init : array_like, optional
        Unconstrained starting point; each chain jitters it by
        ``config.jitter``.  Defaults to the origin.
    """
    cfg = config or NutsConfig()
    results = [run_chain(target, cfg, c, init) for c in range(cfg.chains)]
    unc = np.stack([r[0] for r in results])
    samples = PosteriorSamples(
        draws=target.constrain(unc),
        names=target.layout.names,
        tree_depth=np.stack([r[1] for r in results]),
        divergent=np.stack([r[2] for r in results]),
        accept_stat=np.stack([r[3] for r in results]),
        step_size=np.array([r[4] for r in results]),
        meta={"backend": "nuts", "warmup": cfg.warmup, "seed": cfg.seed},
    )
    if samples.divergent.all():
        warnings.warn(AllDivergent("every post-warmup transition diverged"), stacklevel=2)
    return samples
