"""Discrete Kalman filtering, one-step-ahead metrics and point estimates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .autodiff import Var, log
from .errors import DimensionMismatch, NonConvergence, SingularInnovation, ZeroRange
from .thermal_models import ModelKind

LOG_2PI = math.log(2.0 * math.pi)


def _is_zero(x):
    return not isinstance(x, Var) and x == 0.0


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return a * b


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _dot(row, vec):
    acc = 0.0
    for a, b in zip(row, vec):
        acc = _add(acc, _mul(a, b))
    return acc


def kalman_recursion(A, B, q, r, y, U, m0, P0, keep=False, obs=0):
    """Predict/update recursion on nested lists of scalars.

    The observation picks state ``obs``.  ``A``, ``B``, ``q`` (diagonal of
    the process covariance) and ``r`` may hold floats or autodiff variables;
    ``y`` and ``U`` are plain numbers.  ``m0, P0`` are the prior moments of
    the state at the first observation.  The covariance update uses the
    Joseph form and is kept exactly symmetric by mirroring the upper triangle.

    Returns ``(loglik, yhat, s, m, P, covs)``; the per-step lists are filled
    only when ``keep`` is set.
    """
    D = len(A)
    m = list(m0)
    P = [list(row) for row in P0]
    loglik = 0.0
    yhat, svar, covs = [], [], []
    for n in range(len(y)):
        if n > 0:
            u = U[n]
            m = [_add(_dot(A[i], m), _dot(B[i], u)) for i in range(D)]
            AP = [[_dot(A[i], [P[k][j] for k in range(D)]) for j in range(D)]
                  for i in range(D)]
            newP = [[0.0] * D for _ in range(D)]
            for i in range(D):
                for j in range(i, D):
                    v = _dot(AP[i], A[j])
                    if i == j:
                        v = _add(v, q[i])
                    newP[i][j] = newP[j][i] = v
            P = newP
        s = _add(P[obs][obs], r)
        if not isinstance(s, Var) and not s > 0:
            raise SingularInnovation(f"innovation variance {s} at step {n}")
        e = y[n] - m[obs]
        loglik = loglik - 0.5 * (LOG_2PI + log(s) + e * e / s)
        if keep:
            yhat.append(m[obs])
            svar.append(s)
        K = [P[i][obs] / s for i in range(D)]
        m = [_add(m[i], _mul(K[i], e)) for i in range(D)]
        # Joseph form with L = I - K h', h the observation row: P = L P L' + r K K'
        LP = [[_sub(P[i][j], _mul(K[i], P[obs][j])) for j in range(D)] for i in range(D)]
        newP = [[0.0] * D for _ in range(D)]
        for i in range(D):
            for j in range(i, D):
                v = _sub(LP[i][j], _mul(LP[i][obs], K[j]))
                v = _add(v, _mul(r, _mul(K[i], K[j])))
                newP[i][j] = newP[j][i] = v
        P = newP
        if keep:
            covs.append(P)
    return loglik, yhat, svar, m, P, covs


@dataclass(frozen=True)
class FilterOutput:
    """Per-step one-step-ahead predictions and the final filtered state."""

    y_pred: np.ndarray
    var_pred: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    covs: np.ndarray | None = None

    def __len__(self):
        return self.y_pred.size


def default_initial_state(y0: float, n_states: int, variance: float = 25.0):
    """Prior on the first state: every component centred on the first reading."""
    return np.full(n_states, float(y0)), np.eye(n_states) * variance


def kalman_loglik(mats, data, m0=None, P0=None, keep_cov=False):
    """Log-likelihood of ``data`` under ``mats`` and one-step-ahead predictions.

    Parameters
    ----------
    mats : StateSpaceMatrices
    data : TimeSeriesDataset
    m0, P0 : array_like, optional
        Mean and covariance of the state at the first observation.  Defaults
        to the first reading for every state with variance 25.

    Returns
    -------
    loglik : float
    predictions : FilterOutput
    """
    D = mats.n_states
    row = np.asarray(mats.C_obs, dtype=float)
    if row.shape != (1, D) or np.count_nonzero(row) != 1 or row.max() != 1:
        raise DimensionMismatch("observation row must select exactly one state")
    obs = int(np.argmax(row[0]))
    if m0 is None or P0 is None:
        dm0, dP0 = default_initial_state(data.y[0], D)
        m0 = dm0 if m0 is None else m0
        P0 = dP0 if P0 is None else P0
    m0 = np.asarray(m0, dtype=float).ravel()
    P0 = np.asarray(P0, dtype=float)
    if m0.size != D or P0.shape != (D, D):
        raise DimensionMismatch("initial state moments do not match the state dimension")
    U = data.inputs.tolist()
    ll, yhat, s, m, P, covs = kalman_recursion(
        mats.A.tolist(), mats.B.tolist(), np.diag(mats.Q).tolist(), float(mats.R_obs),
        data.y.tolist(), U, m0.tolist(), P0.tolist(), keep=True, obs=obs)
    out = FilterOutput(np.asarray(yhat), np.asarray(s), np.asarray(m), np.asarray(P),
                       np.asarray(covs) if keep_cov else None)
    return float(ll), out


def one_step_metrics(predictions, data):
    """RMSE and NRMSE (percent of the observed range) of one-step predictions."""
    y = np.asarray(data.y if hasattr(data, "y") else data, dtype=float)
    yhat = np.asarray(predictions.y_pred if hasattr(predictions, "y_pred") else predictions,
                      dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"{y.size} observations vs {yhat.size} predictions")
    rng = float(y.max() - y.min())
    if rng == 0:
        raise ZeroRange("observed series is constant; NRMSE undefined")
    rmse = float(np.sqrt(np.mean((y - yhat) ** 2)))
    return rmse, 100.0 * rmse / rng


@dataclass(frozen=True)
class PointEstimate:
    theta: dict
    objective: float
    converged: bool
    iterations: int
    grad_norm: float
    mode: str


def fit_point(kind, priors, data, init, mode="MLE", fixed=None, max_iter=500,
              gtol=1e-6, m0=None, P0=None):
    """MLE or MAP estimate of the thermal parameters.

    Maximises the Kalman log-likelihood (plus the log-prior for ``"MAP"``)
    over unconstrained coordinates with BFGS and a line search.  Stops when
    the Euclidean gradient norm drops below ``gtol`` or after ``max_iter``
    iterations; a non-converged run warns with ``NonConvergence`` and still
    returns the best iterate.

    ``init`` is a :class:`ThermalParams` or a flat mapping of starting values.
    ``fixed`` holds parameters excluded from the optimisation.
    """
    from .density import build_target  # density builds on this module

    kind = ModelKind.parse(kind)
    mode = mode.upper()
    if mode not in ("MLE", "MAP"):
        raise ValueError(f"mode must be MLE or MAP, got {mode!r}")
    if mode == "MAP" and priors is None:
        raise ValueError("MAP needs priors")
    start = init.to_flat() if hasattr(init, "to_flat") else dict(init)
    target = build_target(kind, priors if mode == "MAP" else None, data,
                          formulation="marginalized", fixed=fixed,
                          include_jacobian=False, m0=m0, P0=P0)
    u0 = target.unconstrain({n: start[n] for n in target.layout.names})

    def negobj(u):
        val, g = target.log_density_and_grad(u)
        if not math.isfinite(val):
            return math.inf, np.zeros_like(u)
        return -val, -g

    res = minimize(negobj, u0, jac=True, method="BFGS",
                   options={"gtol": gtol, "norm": 2, "maxiter": max_iter})
    val, g = target.log_density_and_grad(res.x)
    gnorm = float(np.linalg.norm(g)) if g is not None else math.inf
    if not gnorm < gtol:
        warnings.warn(NonConvergence(
            f"{mode} stopped after {res.nit} iterations with gradient norm {gnorm:.3g}"),
            stacklevel=2)
    theta = target.constrain_dict(res.x)
    if fixed:
        theta.update(fixed)
    return PointEstimate(theta, float(val), bool(gnorm < gtol), int(res.nit), gnorm, mode)
