"""Priors, unconstraining transforms and target log-densities.

Every log-density here is written once as scalar arithmetic that runs on
plain floats or on autodiff variables, and recorded into a replayable
:class:`~rcbayes.autodiff.Program` for the samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from . import autodiff as ad
from .errors import ConfigError, IncompatibleData, MissingPrior, OutOfSupport
from .filtering import LOG_2PI, _add, _dot, default_initial_state, kalman_recursion
from .thermal_models import ModelKind, TimeSeriesDataset, coupling_matrices

DELTA = 0.001
R_UPPER = 70.0

# Default metadata-driven mixture over R-values.
RVALUE_MIXTURE = {"weights": [0.5, 0.5], "mus": [3.02, 3.43], "sigmas": [0.59, 0.50]}


def _gauss_logpdf(x, mean, var):
    d = x - mean
    return -0.5 * (LOG_2PI + ad.log(var) + d * d / var)


# ---------------------------------------------------------------------------
# prior families

class Prior:
    lower = 0.0
    upper = math.inf
    family = ""

    @property
    def support(self):
        return (self.lower, self.upper)

    def logpdf(self, x, env=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        out = {"family": self.family}
        out.update({k: v for k, v in self.__dict__.items() if not k.startswith("_")})
        return out


@dataclass(frozen=True)
class Gamma(Prior):
    shape: float
    rate: float
    family = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ConfigError(f"gamma shape and rate must be positive: {self}")

    @classmethod
    def from_mean_sd(cls, mean, sd):
        return cls(mean * mean / (sd * sd), mean / (sd * sd))

    def logpdf(self, x, env=None):
        a, b = self.shape, self.rate
        return a * math.log(b) - math.lgamma(a) + (a - 1.0) * ad.log(x) - b * x


@dataclass(frozen=True)
class BoundedGamma(Prior):
    """Gamma density truncated to ``(lower, upper)`` and renormalised."""

    shape: float
    rate: float
    lower: float = 0.0
    upper: float = R_UPPER
    family = "bounded_gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ConfigError(f"gamma shape and rate must be positive: {self}")
        if not (0 <= self.lower < self.upper):
            raise ConfigError(f"bounded gamma needs 0 <= lower < upper: {self}")

    @classmethod
    def from_mean_sd(cls, mean, sd, lower=0.0, upper=R_UPPER):
        return cls(mean * mean / (sd * sd), mean / (sd * sd), lower, upper)

    def _log_mass(self):
        hi = special.gammainc(self.shape, self.rate * self.upper) if math.isfinite(self.upper) else 1.0
        lo = special.gammainc(self.shape, self.rate * self.lower)
        return math.log(hi - lo)

    def logpdf(self, x, env=None):
        a, b = self.shape, self.rate
        return (a * math.log(b) - math.lgamma(a) - self._log_mass()
                + (a - 1.0) * ad.log(x) - b * x)


@dataclass(frozen=True)
class HierarchicalGamma(Prior):
    """Gamma with its mean given by another latent coordinate and a fixed sd.

    Shape and rate are ``m**2 / sd**2`` and ``m / sd**2`` for the current
    value ``m`` of ``mean_param``.  The truncation to ``(lower, upper)`` is
    enforced by the transform only; the density is not renormalised.
    """

    mean_param: str
    sd: float = 1.0
    lower: float = 0.0
    upper: float = R_UPPER
    family = "hierarchical_gamma"

    def logpdf(self, x, env=None):
        if env is None or self.mean_param not in env:
            raise MissingPrior(f"hyperparameter {self.mean_param!r} has no value")
        m = env[self.mean_param]
        v = self.sd * self.sd
        a = m * m / v
        b = m / v
        return a * ad.log(b) - ad.lgamma(a) + (a - 1.0) * ad.log(x) - b * x


@dataclass(frozen=True)
class LogNormal(Prior):
    mu: float
    sigma: float
    family = "lognormal"

    def logpdf(self, x, env=None):
        lx = ad.log(x)
        z = (lx - self.mu) / self.sigma
        return -lx - math.log(self.sigma) - 0.5 * LOG_2PI - 0.5 * z * z


@dataclass(frozen=True)
class LogNormalMixture(Prior):
    weights: tuple
    mus: tuple
    sigmas: tuple
    family = "lognormal_mixture"

    def __post_init__(self):
        for name in ("weights", "mus", "sigmas"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.weights) == len(self.mus) == len(self.sigmas) >= 1:
            raise ConfigError("mixture weights, mus and sigmas must have equal length")
        if abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) <= 0:
            raise ConfigError(f"mixture weights must be positive and sum to 1: {self.weights}")
        if min(self.sigmas) <= 0:
            raise ConfigError("mixture sigmas must be positive")

    def logpdf(self, x, env=None):
        terms = [math.log(w) + LogNormal(mu, s).logpdf(x)
                 for w, mu, s in zip(self.weights, self.mus, self.sigmas)]
        return ad.logsumexp(terms)

    def to_dict(self):
        return {"family": self.family, "weights": list(self.weights),
                "mus": list(self.mus), "sigmas": list(self.sigmas)}


@dataclass(frozen=True)
class Normal(Prior):
    mu: float
    sigma: float
    lower = -math.inf
    family = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"normal sigma must be positive: {self}")

    def logpdf(self, x, env=None):
        z = (x - self.mu) / self.sigma
        return -math.log(self.sigma) - 0.5 * LOG_2PI - 0.5 * z * z


@dataclass(frozen=True)
class Uniform(Prior):
    lower: float
    upper: float
    family = "uniform"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigError(f"uniform needs lower < upper: {self}")

    def logpdf(self, x, env=None):
        return -math.log(self.upper - self.lower)


@dataclass(frozen=True)
class OnVariance(Prior):
    """Prior placed on ``x**2`` for a scale parameter ``x``."""

    base: Prior
    family = "on_variance"

    def logpdf(self, x, env=None):
        return self.base.logpdf(x * x, env) + math.log(2.0) + ad.log(x)

    def to_dict(self):
        return {"family": self.family, "base": self.base.to_dict()}


_FAMILIES = {cls.family: cls for cls in
             (Gamma, BoundedGamma, HierarchicalGamma, LogNormal, LogNormalMixture,
              Normal, Uniform, OnVariance)}


def prior_from_dict(spec: Mapping) -> Prior:
    spec = dict(spec)
    try:
        cls = _FAMILIES[spec.pop("family")]
    except KeyError as exc:
        raise ConfigError(f"unknown or missing prior family in {spec}") from exc
    if cls is OnVariance:
        return OnVariance(prior_from_dict(spec["base"]))
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for {cls.family} prior: {exc}") from exc


def log_prior(spec: Prior, theta: float, env=None) -> float:
    """Exact log-density of ``spec`` at ``theta``; ``-inf`` outside the support."""
    theta = float(theta)
    lo, hi = spec.support
    if not math.isfinite(theta) or not lo <= theta <= hi:
        return -math.inf
    if theta == lo and not isinstance(spec, Uniform) and math.isfinite(lo):
        return -math.inf
    return float(spec.logpdf(theta, env))


# ---------------------------------------------------------------------------
# transforms

class Transform:
    name = ""

    def forward(self, u):
        """Return ``(theta, log|dtheta/du|)``."""
        raise NotImplementedError

    def inverse(self, theta: float) -> float:
        raise NotImplementedError

    def to_dict(self):
        return {"name": self.name}


class Identity(Transform):
    name = "identity"

    def forward(self, u):
        return u, 0.0

    def inverse(self, theta):
        return float(theta)

    def __repr__(self):
        return "Identity()"


class Log(Transform):
    name = "log"

    def forward(self, u):
        return ad.exp(u), u

    def inverse(self, theta):
        if not theta > 0:
            raise OutOfSupport(f"log transform needs a positive value, got {theta}")
        return math.log(theta)

    def __repr__(self):
        return "Log()"


@dataclass(frozen=True)
class Interval(Transform):
    lower: float
    upper: float
    name = "interval"

    def forward(self, u):
        width = self.upper - self.lower
        theta = self.lower + width * ad.sigmoid(u)
        # log sigmoid(u) + log sigmoid(-u), each written as -softplus
        logj = math.log(width) - ad.softplus(u) - ad.softplus(-u)
        return theta, logj

    def inverse(self, theta):
        if not self.lower < theta < self.upper:
            raise OutOfSupport(f"{theta} outside ({self.lower}, {self.upper})")
        p = (theta - self.lower) / (self.upper - self.lower)
        return math.log(p) - math.log1p(-p)

    def to_dict(self):
        return {"name": self.name, "lower": self.lower, "upper": self.upper}


def transform_apply(t: Transform, u: float):
    theta, logj = t.forward(float(u))
    return float(theta), float(logj)


def transform_for(prior: Prior | None, positive: bool = True) -> Transform:
    """Transform whose image is the prior's support (positive if unbounded)."""
    if prior is None:
        return Log() if positive else Identity()
    lo, hi = prior.support
    if isinstance(prior, OnVariance):
        return Log()
    if math.isfinite(hi):
        return Interval(max(lo, 0.0) if positive else lo, hi)
    if lo == 0.0 or positive:
        return Log()
    return Identity()


# ---------------------------------------------------------------------------
# prior sets

@dataclass
class PriorSet:
    """Priors by parameter name plus values held fixed during inference."""

    priors: dict
    fixed: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.priors[name]

    def __contains__(self, name):
        return name in self.priors

    def to_dict(self):
        return {"priors": {k: v.to_dict() for k, v in self.priors.items()},
                "fixed": dict(self.fixed)}

    @classmethod
    def from_dict(cls, d):
        return cls({k: prior_from_dict(v) for k, v in d.get("priors", {}).items()},
                   {k: float(v) for k, v in d.get("fixed", {}).items()})


def default_priors(kind, regime="uninformed", binary_hvac=False, informed=None,
                   mixture=None, transferred=None, delta=DELTA, r_upper=R_UPPER,
                   informed_sd=1.0, fixed=None) -> PriorSet:
    """Build one of the prior regimes.

    ``uninformed``
        Broad ``Gamma(delta, delta)`` on everything; resistances bounded by
        ``r_upper``; noise scales get the gamma on their variance.
    ``informed``
        Resistances get a bounded gamma with mean ``informed[name]`` (an audit
        value) and standard deviation ``informed_sd``.
    ``hyper``
        Each resistance gets a latent mean ``<name>_mean`` drawn from the
        lognormal ``mixture``; the resistance is gamma with that mean and
        standard deviation ``informed_sd``.
    ``transferred``
        ``transferred`` maps names to ``(mean, sd)``; those parameters get a
        ``Normal(mean, sd)`` prior, the rest stay uninformed.
    """
    kind = ModelKind.parse(kind)
    broad = Gamma(delta, delta)
    priors = {}
    for name in kind.resistances:
        priors[name] = BoundedGamma(delta, delta, 0.0, r_upper)
    for name in kind.capacitances:
        priors[name] = broad
    priors["A_w"] = broad
    if binary_hvac:
        priors["phi_h_scale"] = broad
    for name in kind.noise_names:
        priors[name] = OnVariance(broad)

    if regime == "uninformed":
        pass
    elif regime == "informed":
        if informed is None:
            raise ConfigError("informed priors need audit R-values")
        for name in kind.resistances:
            value = informed[name] if isinstance(informed, Mapping) else float(informed)
            priors[name] = BoundedGamma.from_mean_sd(value, informed_sd, 0.0, r_upper)
    elif regime == "hyper":
        if mixture is None:
            raise ConfigError("hyper priors need mixture metadata")
        mix = LogNormalMixture(mixture["weights"], mixture["mus"], mixture["sigmas"])
        for name in kind.resistances:
            priors[name + "_mean"] = mix
            priors[name] = HierarchicalGamma(name + "_mean", informed_sd, 0.0, r_upper)
    elif regime == "transferred":
        if not transferred:
            raise ConfigError("transferred priors need a previous posterior summary")
        for name, (mu, sd) in transferred.items():
            if name not in priors:
                continue
            priors[name] = Normal(float(mu), float(sd))
    else:
        raise ConfigError(f"unknown prior regime {regime!r}")
    return PriorSet(priors, dict(fixed or {}))


# ---------------------------------------------------------------------------
# targets

@dataclass(frozen=True)
class Layout:
    """Names and transforms of the unconstrained vector's coordinates."""

    names: tuple
    transforms: tuple
    param_slice: slice
    state_slice: slice | None = None
    kind: ModelKind | None = None
    n_states: int = 0

    @property
    def n_params(self):
        return self.param_slice.stop - self.param_slice.start

    def index(self, name):
        return self.names.index(name)


class TargetDensity:
    """Log-density over an unconstrained vector, Jacobians included."""

    def __init__(self, program: ad.Program, layout: Layout, info=None):
        self.program = program
        self.layout = layout
        self.info = info or {}

    @property
    def dim(self) -> int:
        return self.program.n_inputs

    @classmethod
    def from_function(cls, fn: Callable, names: Sequence[str],
                      transforms: Sequence[Transform] | None = None,
                      include_jacobian: bool = True):
        """Wrap ``fn(values_by_name) -> log-density in constrained space``."""
        names = tuple(names)
        transforms = tuple(transforms or [Identity()] * len(names))

        def logp(u):
            env, total = {}, 0.0
            for name, t, ui in zip(names, transforms, u):
                theta, logj = t.forward(ui)
                env[name] = theta
                if include_jacobian and not (isinstance(logj, float) and logj == 0.0):
                    total = total + logj
            return fn(env) + total

        layout = Layout(names, transforms, slice(0, len(names)))
        return cls(ad.record(logp, len(names)), layout)

    def log_density(self, u) -> float:
        return self.program.try_value(np.asarray(u, dtype=float))

    def log_density_and_grad(self, u):
        """``(value, gradient)``; ``(-inf, None)`` when ``u`` is not admissible."""
        return self.program.try_value_and_grad(np.asarray(u, dtype=float))

    def constrain(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = u.copy()
        for i, t in enumerate(self.layout.transforms):
            if not isinstance(t, Identity):
                out[..., i] = forward_array(t, u[..., i])
        return out

    def constrain_dict(self, u) -> dict:
        theta = self.constrain(u)
        sl = self.layout.param_slice
        return {n: float(theta[i]) for i, n in enumerate(self.layout.names[sl])}

    def unconstrain(self, values) -> np.ndarray:
        """Inverse of :meth:`constrain`; ``values`` is a vector or a name mapping."""
        if isinstance(values, Mapping):
            u = np.zeros(self.dim)
            for name, v in values.items():
                i = self.layout.index(name)
                u[i] = self.layout.transforms[i].inverse(float(v))
            return u
        values = np.asarray(values, dtype=float)
        return np.array([t.inverse(v) for t, v in zip(self.layout.transforms, values)])


def forward_array(t, u):
    if isinstance(t, Log):
        return np.exp(u)
    if isinstance(t, Interval):
        return t.lower + (t.upper - t.lower) * special.expit(u)
    return u


def build_target(kind, priors: PriorSet | None, data: TimeSeriesDataset,
                 formulation="marginalized", fixed=None, include_jacobian=True,
                 m0=None, P0=None, param_order=None) -> TargetDensity:
    """Log posterior (or log-likelihood when ``priors`` is None) of a thermal model.

    ``formulation="marginalized"`` integrates the states out with the Kalman
    filter.  ``"latent_states"`` keeps them as ``D * N`` extra coordinates
    (state ``n``, component ``d`` at ``state_slice.start + n * D + d``) with
    the first state drawn from ``N(m0, P0)``.

    ``include_jacobian=False`` gives the density in constrained coordinates,
    as needed by MLE/MAP.
    """
    kind = ModelKind.parse(kind)
    if formulation not in ("marginalized", "latent_states"):
        raise ConfigError(f"unknown formulation {formulation!r}")
    D = kind.n_states
    fixed = dict(fixed or {})
    if priors is not None:
        fixed = {**priors.fixed, **fixed}
    model_names = [n for n in kind.all_names(data.binary_hvac) if n not in fixed]
    extra = []
    if priors is not None:
        missing = [n for n in model_names if n not in priors]
        if missing:
            raise MissingPrior(f"no prior for {', '.join(missing)}")
        extra = [n for n in priors.priors if n not in model_names and n not in fixed
                 and n not in kind.all_names(True) and n != "A_e"]
    names = model_names + extra
    if param_order is not None:
        if sorted(param_order) != sorted(names):
            raise ConfigError("param_order must be a permutation of the parameter names")
        names = list(param_order)
    transforms = [transform_for(priors[n] if priors is not None else None) for n in names]
    n_par = len(names)

    y = data.y.tolist()
    U = data.inputs.tolist()
    N = len(y)
    if not np.all(np.isfinite(data.y)):
        raise IncompatibleData("observations must be finite")
    if m0 is None or P0 is None:
        dm0, dP0 = default_initial_state(y[0], D)
        m0 = dm0 if m0 is None else m0
        P0 = dP0 if P0 is None else P0
    m0 = np.asarray(m0, float).ravel().tolist()
    P0 = np.asarray(P0, float).tolist()
    dt = data.dt
    latent = formulation == "latent_states"

    def logp(u):
        env = dict(fixed)
        total = 0.0
        for name, t, ui in zip(names, transforms, u[:n_par]):
            theta, logj = t.forward(ui)
            env[name] = theta
            if include_jacobian:
                total = _add(total, logj)
        if priors is not None:
            for name in names:
                total = _add(total, priors[name].logpdf(env[name], env))
        A, B = coupling_matrices(kind, env, dt)
        q = [env[n] * env[n] for n in kind.noise_names[:-1]]
        r = env["sigma_obs"] * env["sigma_obs"]
        if not latent:
            ll = kalman_recursion(A, B, q, r, y, U, m0, P0)[0]
            return _add(total, ll)
        x = [u[n_par + n * D: n_par + (n + 1) * D] for n in range(N)]
        # first state: Gaussian prior, diagonal or full covariance
        P0inv = np.linalg.inv(np.asarray(P0))
        sign, logdet = np.linalg.slogdet(np.asarray(P0))
        d0 = [x[0][i] - m0[i] for i in range(D)]
        quad = 0.0
        for i in range(D):
            for j in range(D):
                if P0inv[i][j] != 0.0:
                    quad = _add(quad, P0inv[i][j] * d0[i] * d0[j])
        total = _add(total, -0.5 * (D * LOG_2PI + logdet) - 0.5 * quad)
        logq = [ad.log(v) for v in q]
        invq = [1.0 / v for v in q]
        logr = ad.log(r)
        for n in range(N):
            if n > 0:
                for i in range(D):
                    mean = _add(_dot(A[i], x[n - 1]), _dot(B[i], U[n]))
                    d = x[n][i] - mean
                    total = total - 0.5 * (LOG_2PI + logq[i] + d * d * invq[i])
            e = y[n] - x[n][0]
            total = total - 0.5 * (LOG_2PI + logr + e * e / r)
        return total

    dim = n_par + (D * N if latent else 0)
    program = ad.record(logp, dim)
    if latent:
        all_names = tuple(names) + tuple(f"x[{n}].{s}" for n in range(N) for s in kind.states)
        all_tf = tuple(transforms) + (Identity(),) * (D * N)
        layout = Layout(all_names, all_tf, slice(0, n_par), slice(n_par, dim), kind, D)
    else:
        layout = Layout(tuple(names), tuple(transforms), slice(0, n_par), None, kind, D)
    info = {"formulation": formulation, "fixed": fixed, "m0": m0, "P0": P0,
            "binary_hvac": data.binary_hvac, "dt": dt}
    return TargetDensity(program, layout, info)
