"""RC-network thermal models and their discrete-time state-space form.

Units throughout: degrees Celsius, kW, kWh per degree C, hours.

Inputs are ordered ``(Ta, phi_h, phi_s)``.  States are ordered interior
first, so the observation row is always ``[1, 0, ...]``.  The transition uses
the input at the arrival time: ``x[n] = A x[n-1] + B u[n]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (DataError, DimensionMismatch, MissingParameter,
                     NonPositiveParameter, NonUniformSampling,
                     UnstableDiscretization)


N_INPUTS = 3  # Ta, phi_h, phi_s


class ModelKind(enum.Enum):
    Ti = "Ti"
    TiTe = "TiTe"
    TiTeTh = "TiTeTh"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise ValueError(f"unknown model kind {value!r}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def states(self) -> tuple[str, ...]:
        return {"Ti": ("i",), "TiTe": ("i", "e"), "TiTeTh": ("i", "e", "h")}[self.value]

    @property
    def resistances(self) -> tuple[str, ...]:
        return {
            "Ti": ("R_ia",),
            "TiTe": ("R_ie", "R_ea"),
            "TiTeTh": ("R_ie", "R_ea", "R_ih"),
        }[self.value]

    @property
    def capacitances(self) -> tuple[str, ...]:
        return {
            "Ti": ("C_i",),
            "TiTe": ("C_i", "C_e"),
            "TiTeTh": ("C_i", "C_e", "C_h"),
        }[self.value]

    @property
    def param_names(self) -> tuple[str, ...]:
        """Physical parameters, in canonical order."""
        return self.resistances + self.capacitances + ("A_w",)

    @property
    def ambient_resistances(self) -> tuple[str, ...]:
        """Resistances on the interior-to-ambient path."""
        return {"Ti": ("R_ia",), "TiTe": ("R_ie", "R_ea"),
                "TiTeTh": ("R_ie", "R_ea")}[self.value]

    @property
    def noise_names(self) -> tuple[str, ...]:
        return tuple(f"sigma_{s}" for s in self.states) + ("sigma_obs",)

    def all_names(self, binary_hvac: bool = False) -> tuple[str, ...]:
        extra = ("phi_h_scale",) if binary_hvac else ()
        return self.param_names + extra + self.noise_names


@dataclass(frozen=True)
class ThermalParams:
    """Physical and noise parameters of one thermal model."""

    kind: ModelKind
    resistances: Mapping[str, float]
    capacitances: Mapping[str, float]
    A_w: float
    sigma: tuple[float, ...]
    sigma_obs: float
    phi_h_scale: float | None = None
    A_e: float | None = None  # parked: no in-scope model uses an envelope aperture

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        object.__setattr__(self, "resistances", dict(self.resistances))
        object.__setattr__(self, "capacitances", dict(self.capacitances))
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))

    @classmethod
    def from_flat(cls, kind, values: Mapping[str, float]) -> "ThermalParams":
        kind = ModelKind.parse(kind)
        try:
            return cls(
                kind=kind,
                resistances={n: float(values[n]) for n in kind.resistances},
                capacitances={n: float(values[n]) for n in kind.capacitances},
                A_w=float(values["A_w"]),
                sigma=tuple(float(values[n]) for n in kind.noise_names[:-1]),
                sigma_obs=float(values["sigma_obs"]),
                phi_h_scale=(float(values["phi_h_scale"])
                             if values.get("phi_h_scale") is not None else None),
                A_e=float(values["A_e"]) if values.get("A_e") is not None else None,
            )
        except KeyError as exc:
            raise MissingParameter(f"missing parameter {exc.args[0]!r} for {kind.value}")

    def to_flat(self) -> dict[str, float]:
        out = dict(self.resistances)
        out.update(self.capacitances)
        out["A_w"] = self.A_w
        if self.phi_h_scale is not None:
            out["phi_h_scale"] = self.phi_h_scale
        for name, s in zip(self.kind.noise_names[:-1], self.sigma):
            out[name] = s
        out["sigma_obs"] = self.sigma_obs
        return out

    def replace(self, **changes) -> "ThermalParams":
        flat = self.to_flat()
        flat.update(changes)
        return ThermalParams.from_flat(self.kind, flat)

    def validate(self) -> None:
        kind = self.kind
        if set(self.resistances) != set(kind.resistances):
            raise MissingParameter(
                f"{kind.value} needs resistances {kind.resistances}, got {tuple(self.resistances)}")
        if set(self.capacitances) != set(kind.capacitances):
            raise MissingParameter(
                f"{kind.value} needs capacitances {kind.capacitances}, got {tuple(self.capacitances)}")
        if len(self.sigma) != kind.n_states:
            raise DimensionMismatch(
                f"{kind.value} needs {kind.n_states} process noise scales, got {len(self.sigma)}")
        for name, value in self.to_flat().items():
            if not math.isfinite(value):
                raise NonPositiveParameter(f"{name} is not finite: {value}")
        for name, value in {**self.resistances, **self.capacitances}.items():
            if value <= 0:
                raise NonPositiveParameter(f"{name} must be positive, got {value}")
        if self.A_w < 0:
            raise NonPositiveParameter(f"A_w must be nonnegative, got {self.A_w}")
        if self.phi_h_scale is not None and self.phi_h_scale <= 0:
            raise NonPositiveParameter(f"phi_h_scale must be positive, got {self.phi_h_scale}")
        for name, value in zip(kind.noise_names, self.sigma + (self.sigma_obs,)):
            if value < 0:
                raise NonPositiveParameter(f"{name} must be nonnegative, got {value}")


@dataclass(frozen=True)
class StateSpaceMatrices:
    A: np.ndarray
    B: np.ndarray
    C_obs: np.ndarray
    Q: np.ndarray
    R_obs: float
    dt: float

    @property
    def n_states(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Regularly sampled indoor temperature and exogenous drivers.

    ``timestamps`` are in hours.  When ``binary_hvac`` is set, ``phi_h`` holds
    an on/off signal in {-1, 0, 1} (negative for cooling) that the model
    scales by ``phi_h_scale``.
    """

    timestamps: np.ndarray
    y: np.ndarray
    ta: np.ndarray
    phi_h: np.ndarray
    phi_s: np.ndarray
    binary_hvac: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("timestamps", "y", "ta", "phi_h", "phi_s"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.y.size
        if n < 2:
            raise DimensionMismatch("a dataset needs at least 2 samples")
        for name in ("timestamps", "ta", "phi_h", "phi_s"):
            if getattr(self, name).shape != (n,):
                raise DimensionMismatch(f"{name} has length {getattr(self, name).size}, expected {n}")
        steps = np.diff(self.timestamps)
        if np.any(steps <= 0):
            raise NonUniformSampling("timestamps must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            bad = int(np.argmax(np.abs(steps - steps[0]) > 1e-9 * abs(steps[0])))
            raise NonUniformSampling(
                f"sampling interval changes at row {bad + 1}: {steps[0]} h vs {steps[bad]} h")
        for name in ("y", "ta", "phi_h", "phi_s"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"{name} contains missing or non-finite values")

    def __len__(self):
        return self.y.size

    @property
    def dt(self) -> float:
        return float(self.timestamps[1] - self.timestamps[0])

    @property
    def inputs(self) -> np.ndarray:
        """N x 3 array of ``(Ta, phi_h, phi_s)``."""
        return np.column_stack([self.ta, self.phi_h, self.phi_s])

    def slice(self, start: int = 0, stop: int | None = None) -> "TimeSeriesDataset":
        s = slice(start, stop)
        return TimeSeriesDataset(self.timestamps[s], self.y[s], self.ta[s],
                                 self.phi_h[s], self.phi_s[s], self.binary_hvac,
                                 dict(self.meta))


def coupling_matrices(kind: ModelKind, p: Mapping, dt: float):
    """Transition and input matrices as nested lists.

    Works on plain floats and on autodiff variables alike, so the same
    arithmetic feeds both the numeric path and recorded log-densities.
    Every ``1/(R C)`` and ``1/C`` coupling is scaled by ``dt``.
    """
    scale = p.get("phi_h_scale")
    if kind is ModelKind.Ti:
        a = dt / (p["R_ia"] * p["C_i"])
        heat = dt / p["C_i"]
        A = [[1.0 - a]]
        B = [[a, heat, dt * p["A_w"] / p["C_i"]]]
        heat_row = 0
    elif kind is ModelKind.TiTe:
        a_ie_i = dt / (p["R_ie"] * p["C_i"])
        a_ie_e = dt / (p["R_ie"] * p["C_e"])
        a_ea = dt / (p["R_ea"] * p["C_e"])
        A = [[1.0 - a_ie_i, a_ie_i],
             [a_ie_e, 1.0 - a_ie_e - a_ea]]
        B = [[0.0, dt / p["C_i"], dt * p["A_w"] / p["C_i"]],
             [a_ea, 0.0, 0.0]]
        heat_row = 0
    elif kind is ModelKind.TiTeTh:
        a_ie_i = dt / (p["R_ie"] * p["C_i"])
        a_ih_i = dt / (p["R_ih"] * p["C_i"])
        a_ie_e = dt / (p["R_ie"] * p["C_e"])
        a_ea = dt / (p["R_ea"] * p["C_e"])
        a_ih_h = dt / (p["R_ih"] * p["C_h"])
        A = [[1.0 - a_ie_i - a_ih_i, a_ie_i, a_ih_i],
             [a_ie_e, 1.0 - a_ie_e - a_ea, 0.0],
             [a_ih_h, 0.0, 1.0 - a_ih_h]]
        B = [[0.0, 0.0, dt * p["A_w"] / p["C_i"]],
             [a_ea, 0.0, 0.0],
             [0.0, dt / p["C_h"], 0.0]]
        heat_row = 2
    else:  # pragma: no cover
        raise ValueError(kind)
    if scale is not None:
        B[heat_row][1] = B[heat_row][1] * scale
    return A, B


def build_matrices(kind, params: ThermalParams, dt: float) -> StateSpaceMatrices:
    """Discrete-time ``(A, B, C_obs, Q, R_obs)`` for ``params`` at step ``dt`` hours.

    Raises
    ------
    NonPositiveParameter
        If a resistance, capacitance or ``dt`` is not strictly positive.
    UnstableDiscretization
        If ``dt`` is so large relative to the RC constants that a diagonal
        entry of ``A`` turns negative.
    """
    kind = ModelKind.parse(kind)
    if params.kind is not kind:
        raise MissingParameter(f"parameters are for {params.kind.value}, not {kind.value}")
    params.validate()
    if not dt > 0:
        raise NonPositiveParameter(f"dt must be positive, got {dt}")
    A, B = coupling_matrices(kind, params.to_flat(), float(dt))
    A = np.array(A, dtype=np.float64)
    B = np.array(B, dtype=np.float64)
    diag = np.diag(A)
    if np.any(diag < 0):
        raise UnstableDiscretization(
            f"dt={dt} h exceeds the RC time constants (diagonal of A: {diag.tolist()})")
    C_obs = np.zeros((1, kind.n_states))
    C_obs[0, 0] = 1.0
    Q = np.diag(np.square(params.sigma))
    return StateSpaceMatrices(A, B, C_obs, Q, float(params.sigma_obs) ** 2, float(dt))


def simulate(mats: StateSpaceMatrices, inputs, x0, seed: int | None = None,
             with_noise: bool = True):
    """Roll the state-space model over ``inputs`` (N x 3) starting at ``x0``.

    ``states[:, 0]`` is ``x0``; later columns follow the transition equation.
    Returns ``(states, observations)`` of shapes ``(D, N)`` and ``(1, N)``.
    """
    U = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    D = mats.n_states
    if U.ndim != 2 or U.shape[1] != mats.B.shape[1]:
        raise DimensionMismatch(f"inputs must be N x {mats.B.shape[1]}, got {U.shape}")
    if x0.size != D:
        raise DimensionMismatch(f"x0 has length {x0.size}, expected {D}")
    N = U.shape[0]
    states = np.empty((D, N))
    if with_noise:
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((N, D)) * np.sqrt(np.diag(mats.Q))
        v = rng.standard_normal(N) * math.sqrt(mats.R_obs)
    x = x0.copy()
    states[:, 0] = x
    A, B = mats.A, mats.B
    for n in range(1, N):
        x = A @ x + B @ U[n]
        if with_noise:
            x = x + w[n]
        states[:, n] = x
    obs = mats.C_obs @ states
    if with_noise:
        obs = obs + v
    return states, obs


def composite_rc(kind, samples):
    """Total ambient-path resistance and total capacitance per draw.

    ``samples`` is a :class:`~rcbayes.nuts.PosteriorSamples` or any mapping
    from parameter name to an array of draws.  Summing draw by draw realises
    the convolution of the component densities by Monte Carlo.
    """
    kind = ModelKind.parse(kind)

    def get(name):
        try:
            if hasattr(samples, "param"):
                return np.asarray(samples.param(name), dtype=np.float64)
            return np.asarray(samples[name], dtype=np.float64)
        except KeyError:
            raise MissingParameter(f"samples lack {name!r} needed for {kind.value}")

    total_r = sum(get(n) for n in kind.ambient_resistances)
    total_c = sum(get(n) for n in kind.capacitances)
    return total_r, total_c
