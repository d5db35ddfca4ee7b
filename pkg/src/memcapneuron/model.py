"""Dimensionless leaky-memcapacitor model.

All quantities are expressed in the reduced unit system in which the plate
area times permittivity, the Lennard-Jones well depth and length, and the
normal-regime memristance are all equal to one. Distances are therefore in
units of the Lennard-Jones length, resistances in units of the normal
memristance, and so on. None of these normalisation constants appear as
runtime parameters.

The physics primitives (``_memristance``, ``_potential_dx`` ...) are numba
functions written as numpy expressions. They accept scalars or arrays, which
the vectorised Newton solver relies on, and are called directly from the
integrator kernel, so there is a single source for the equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numba import njit

__all__ = [
    "DomainError",
    "ParameterError",
    "ModelParams",
    "CircuitState",
    "DC",
    "DCPlusAC",
    "PiecewiseDC",
    "Drive",
    "FixedResistor",
    "KernelMemristor",
    "ThresholdMemristor",
    "SeriesElement",
    "capacitance",
    "memristance",
    "memristance_derivative",
    "potential_and_gradient",
    "potential_curvature",
    "memcap_voltage",
    "vector_field",
    "series_current",
    "jacobian",
    "jacobian_fd",
    "TABLE1_R",
]

TYPE_I = "type1"
TYPE_II = "type2"
_KIND_CODES = {TYPE_I: 0, TYPE_II: 1}

# Table 1 series resistance.
TABLE1_R = 1e-3


class DomainError(ValueError):
    """State outside the valid region ``x < d - x_guard``."""


class ParameterError(ValueError):
    """Parameter set violating a model invariant."""


@dataclass(frozen=True)
class ModelParams:
    """Device constants of the leaky memcapacitor.

    Defaults are the reference simulation parameters. ``beta`` is the contact
    sharpness used by type I memristance; type II uses its own ``beta2``.
    """

    d: float = 8.0
    x_c: float = 6.4
    beta: float = 5e4
    k: float = 5.0 / 6.0
    rho0: float = 1.25e-4
    gamma_damp: float = 1.25e-4
    memristance: str = TYPE_I
    beta2: float = 50.0
    x_guard: float = 1e-3

    def __post_init__(self):
        if self.memristance not in _KIND_CODES:
            raise ParameterError(
                f"memristance must be one of {sorted(_KIND_CODES)}, got {self.memristance!r}"
            )
        checks = [
            (self.d > self.x_c > 0, f"need d > x_c > 0 (d={self.d}, x_c={self.x_c})"),
            (self.k > 0, f"need k > 0 (k={self.k})"),
            (self.gamma_damp > 0, f"need gamma_damp > 0 (gamma_damp={self.gamma_damp})"),
            (self.rho0 > 0, f"need rho0 > 0 (rho0={self.rho0})"),
            (self.beta > 0, f"need beta > 0 (beta={self.beta})"),
            (self.beta2 > 0, f"need beta2 > 0 (beta2={self.beta2})"),
            (0 < self.x_guard < self.d, f"need 0 < x_guard < d (x_guard={self.x_guard})"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ParameterError(msg)

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.memristance]

    @property
    def sharpness(self) -> float:
        """Contact sharpness actually used by the selected memristance."""
        return self.beta if self.memristance == TYPE_I else self.beta2

    @property
    def x_max(self) -> float:
        return self.d - self.x_guard


@dataclass(frozen=True)
class CircuitState:
    x: float
    q: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.q], dtype=float)


# -- drives -----------------------------------------------------------------


@dataclass(frozen=True)
class DC:
    V: float

    def value(self, t):
        return np.full(np.shape(t), float(self.V)) if np.ndim(t) else float(self.V)


@dataclass(frozen=True)
class DCPlusAC:
    V_dc: float
    delta_V: float
    omega_source: float

    def value(self, t):
        return self.V_dc + self.delta_V * np.sin(self.omega_source * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class PiecewiseDC:
    """Sequence of ``(duration, V)`` plateaus; the last one extends forever."""

    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple((float(T), float(V)) for T, V in self.segments)
        if not segs:
            raise ParameterError("PiecewiseDC needs at least one segment")
        if any(T <= 0 for T, _ in segs):
            raise ParameterError("PiecewiseDC durations must be > 0")
        object.__setattr__(self, "segments", segs)

    @property
    def breakpoints(self) -> np.ndarray:
        """Start times of segments 2..n."""
        return np.cumsum([T for T, _ in self.segments])[:-1]

    def value(self, t):
        levels = np.array([V for _, V in self.segments])
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float), side="right")
        out = levels[idx]
        return float(out) if np.ndim(out) == 0 else out


Drive = Union[DC, DCPlusAC, PiecewiseDC]


# -- series elements ----------------------------------------------------------


def _require_positive(**kw):
    for name, val in kw.items():
        if not val > 0:
            raise ParameterError(f"need {name} > 0 (got {val})")


@dataclass(frozen=True)
class FixedResistor:
    r: float = TABLE1_R

    def __post_init__(self):
        _require_positive(r=self.r)


@dataclass(frozen=True)
class KernelMemristor:
    """Series memristor driven by current with exponentially fading relaxation.

    ``gamma_kernel`` is the decay rate of the relaxation memory kernel and is
    unrelated to the plate damping ``ModelParams.gamma_damp``.
    """

    alpha1: float
    lambda1: float
    gamma_kernel: float = 0.0
    r0: float = 1e-3
    r_min: float = 0.8e-3
    init_r: float = 1e-3

    def __post_init__(self):
        _require_positive(r0=self.r0, r_min=self.r_min, init_r=self.init_r, lambda1=self.lambda1)
        if self.gamma_kernel < 0:
            raise ParameterError(f"need gamma_kernel >= 0 (got {self.gamma_kernel})")
        if self.init_r < self.r_min:
            raise ParameterError("need init_r >= r_min")


@dataclass(frozen=True)
class ThresholdMemristor:
    """Series memristor that grows above a current threshold and decays below it.

    The hard step is replaced by ``arctan(lambda_prime * (I_r - I_thresh))/pi + 0.5``.
    """

    alpha2: float
    lambda2: float
    I_thresh: float
    lambda_prime: float
    r_min: float = 0.8e-3
    init_r: float = 1e-3

    def __post_init__(self):
        _require_positive(
            alpha2=self.alpha2,
            lambda2=self.lambda2,
            lambda_prime=self.lambda_prime,
            r_min=self.r_min,
            init_r=self.init_r,
        )
        if self.init_r < self.r_min:
            raise ParameterError("need init_r >= r_min")


SeriesElement = Union[FixedResistor, KernelMemristor, ThresholdMemristor]


# -- scalar physics (numpy-broadcasting, numba-compilable) ------------------------


@njit(cache=True)
def _contact_step(x, x_c, beta):
    # ~1 in the normal regime, ~0 in contact
    return np.arctan(beta * (x_c - x)) / np.pi + 0.5


@njit(cache=True)
def _contact_step_dx(x, x_c, beta):
    u = beta * (x_c - x)
    return -beta / (np.pi * (1.0 + u * u))


@njit(cache=True)
def _memristance(x, d, x_c, beta, rho0, kind):
    s = _contact_step(x, x_c, beta)
    if kind == 0:
        return s + rho0 * (d - x)
    return rho0 * (d - x) * (9.0 * s + 1.0)


@njit(cache=True)
def _memristance_dx(x, d, x_c, beta, rho0, kind):
    s = _contact_step(x, x_c, beta)
    ds = _contact_step_dx(x, x_c, beta)
    if kind == 0:
        return ds - rho0
    return -rho0 * (9.0 * s + 1.0) + rho0 * (d - x) * 9.0 * ds


@njit(cache=True)
def _potential(x, d, k):
    g = 1.0 / (d - x)
    g6 = g**6
    return 0.5 * k * x * x + 4.0 * (g6 * g6 - g6)


@njit(cache=True)
def _potential_dx(x, d, k):
    g = 1.0 / (d - x)
    g6 = g**6
    return k * x + 4.0 * (12.0 * g6 * g6 * g - 6.0 * g6 * g)


@njit(cache=True)
def _potential_dxx(x, d, k):
    g = 1.0 / (d - x)
    g6 = g**6
    return k + 4.0 * (156.0 * g6 * g6 * g * g - 42.0 * g6 * g * g)


@njit(cache=True)
def _field(x, q, V, r, d, x_c, beta, k, rho0, gamma, kind):
    vc = q * (d - x)
    fx = (q * q - _potential_dx(x, d, k)) / gamma
    fq = (V - vc) / r - vc / _memristance(x, d, x_c, beta, rho0, kind)
    return fx, fq


@njit(cache=True)
def _jac(x, q, r, d, x_c, beta, k, rho0, gamma, kind):
    R = _memristance(x, d, x_c, beta, rho0, kind)
    dR = _memristance_dx(x, d, x_c, beta, rho0, kind)
    a = -_potential_dxx(x, d, k) / gamma
    b = 2.0 * q / gamma
    c = q / r + q / R + q * (d - x) * dR / (R * R)
    e = -(d - x) / r - (d - x) / R
    return a, b, c, e



# -- public API -------------------------------------------------------------------


def _check_domain(p: ModelParams, x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x >= p.x_max):
        raise DomainError(f"displacement must satisfy x < d - x_guard = {p.x_max:g} (got {x})")


def _arg(x):
    # numba wants floats or ndarrays, not 0-d arrays
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def capacitance(p: ModelParams, x):
    """Plate capacitance ``1/(d - x)``."""
    _check_domain(p, x)
    return _scalar(1.0 / (p.d - _arg(x)))


def memristance(p: ModelParams, x):
    """Leakage resistance R(x) for the configured memristance kind."""
    _check_domain(p, x)
    x = _arg(x)
    return _scalar(_memristance(x, p.d, p.x_c, p.sharpness, p.rho0, p.kind_code))


def memristance_derivative(p: ModelParams, x):
    _check_domain(p, x)
    x = _arg(x)
    return _scalar(_memristance_dx(x, p.d, p.x_c, p.sharpness, p.rho0, p.kind_code))


def potential_and_gradient(p: ModelParams, x):
    """Spring plus Lennard-Jones potential and its derivative.

    Returns
    -------
    U, dU_dx : float or ndarray
    """
    _check_domain(p, x)
    x = _arg(x)
    return _scalar(_potential(x, p.d, p.k)), _scalar(_potential_dx(x, p.d, p.k))


def potential_curvature(p: ModelParams, x):
    _check_domain(p, x)
    return _scalar(_potential_dxx(_arg(x), p.d, p.k))


def memcap_voltage(p: ModelParams, s: CircuitState) -> float:
    """Voltage across the memcapacitor, ``q * (d - x)``."""
    _check_domain(p, s.x)
    return s.q * (p.d - s.x)


def _drive_value(drive: Drive, t: float) -> float:
    return float(drive.value(t))


def vector_field(p: ModelParams, drive: Drive, series: SeriesElement, s: CircuitState, t: float = 0.0):
    """Time derivatives ``(dx/dt, dq/dt)`` for a circuit with a fixed series resistor."""
    if not isinstance(series, FixedResistor):
        raise TypeError("vector_field handles FixedResistor only; memristor variants use the augmented ODE")
    _check_domain(p, s.x)
    V = _drive_value(drive, t)
    fx, fq = _field(float(s.x), float(s.q), V, series.r, p.d, p.x_c, p.sharpness, p.k, p.rho0, p.gamma_damp, p.kind_code)
    if not (math.isfinite(fx) and math.isfinite(fq)):
        raise FloatingPointError(f"non-finite vector field at x={s.x}, q={s.q}, V={V}")
    return float(fx), float(fq)


def series_current(
    p: ModelParams,
    drive: Drive,
    series: SeriesElement,
    s: CircuitState,
    t: float = 0.0,
    r: float | None = None,
) -> float:
    """Current through the series element, ``(V(t) - V_C)/r``.

    For memristor variants pass the instantaneous resistance as ``r``;
    otherwise their initial resistance is used.
    """
    if r is None:
        r = series.r if isinstance(series, FixedResistor) else series.init_r
    return (_drive_value(drive, t) - memcap_voltage(p, s)) / r


def jacobian(p: ModelParams, V: float, s: CircuitState, r: float = TABLE1_R):
    """Analytic Jacobian of the fixed-resistor field with respect to ``(x, q)``.

    ``V`` does not enter the derivatives but is kept in the signature so that
    callers can treat this like the field itself.

    Returns
    -------
    J : ndarray, shape (2, 2)
    det, tr, delta : float
        Determinant, trace and discriminant ``tr**2 - 4*det``.
    """
    _check_domain(p, s.x)
    a, b, c, e = _jac(float(s.x), float(s.q), float(r), p.d, p.x_c, p.sharpness, p.k, p.rho0, p.gamma_damp, p.kind_code)
    J = np.array([[a, b], [c, e]], dtype=float)
    det = a * e - b * c
    tr = a + e
    return J, float(det), float(tr), float(tr * tr - 4.0 * det)


def jacobian_fd(p: ModelParams, V: float, s: CircuitState, r: float = TABLE1_R, rel_step: float = 1e-7):
    """Central-difference Jacobian, for cross-checking :func:`jacobian`."""
    series = FixedResistor(r)
    drive = DC(V)
    J = np.empty((2, 2))
    base = np.array([s.x, s.q])
    for j in range(2):
        h = rel_step * max(1.0, abs(base[j]))
        up, dn = base.copy(), base.copy()
        up[j] += h
        dn[j] -= h
        fu = vector_field(p, drive, series, CircuitState(*up))
        fd = vector_field(p, drive, series, CircuitState(*dn))
        J[:, j] = (np.array(fu) - np.array(fd)) / (2 * h)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    tr = J[0, 0] + J[1, 1]
    return J, float(det), float(tr), float(tr * tr - 4 * det)
