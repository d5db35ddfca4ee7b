"""Adaptive Dormand-Prince 5(4) integration and circuit simulation.

The stepping kernel is compiled with numba when the right-hand side is itself
a numba function (the circuit models), and runs as plain Python otherwise, so
arbitrary callables can still be integrated with the same code.
"""

from __future__ import annotations

import logging
import math
import types
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

from .model import (
    DC,
    DCPlusAC,
    CircuitState,
    DomainError,
    Drive,
    FixedResistor,
    KernelMemristor,
    ModelParams,
    ParameterError,
    PiecewiseDC,
    SeriesElement,
    ThresholdMemristor,
    _memristance,
    _potential_dx,
)

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorConfig",
    "IntegrationError",
    "StepBudgetExceeded",
    "StepUnderflow",
    "Trajectory",
    "CircuitTrace",
    "integrate",
    "resample",
    "simulate_circuit",
    "DEFAULT_DT_OUT",
]

# Output sampling for analyses. Spike periods are a few 1e-4 time units and
# contact excursions last ~5e-5, so this resolves both.
DEFAULT_DT_OUT = 1e-6


class IntegrationError(RuntimeError):
    pass


class StepBudgetExceeded(IntegrationError):
    pass


class StepUnderflow(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-11
    h_init: float = 1e-6
    h_max: float = 1e-2
    max_steps: int = 20_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ParameterError("rtol and atol must be > 0")
        if not (self.h_max >= self.h_init > 0):
            raise ParameterError("need h_max >= h_init > 0")
        if not self.max_steps > 0:
            raise ParameterError("max_steps must be > 0")

    def tightened(self, factor: float) -> "IntegratorConfig":
        return IntegratorConfig(self.rtol / factor, self.atol / factor, self.h_init, self.h_max, self.max_steps)


# -- Dormand-Prince tableau -------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
# difference between 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Shampine 1986), y(t0 + th*h) = y0 + h * (K.T @ _P) @ [th, th^2, th^3, th^4]
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_OK, _BUDGET, _UNDERFLOW, _DOMAIN = 0, 1, 2, 3


@njit(cache=True)
def _all_finite(v):
    for i in range(v.size):
        if not math.isfinite(v[i]):
            return False
    return True


def _dopri_loop(args, t0, t1, y0, rtol, atol, h_init, h_max, max_steps, clamp_idx, clamp_min, C, A, B, E, P):
    n = y0.size
    cap = 1024
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    qs = np.empty((cap, n, 4))
    K = np.empty((7, n))
    yt = np.empty(n)

    t = t0
    y = y0.copy()
    ts[0] = t
    ys[0] = y
    f = _RHS(t, y, args)
    if not _all_finite(f):
        return ts[:1], ys[:1], qs[:0], _DOMAIN, 0, 0, t
    h = min(h_init, h_max, t1 - t0)
    n_acc = 0
    n_rej = 0
    n_clamp = 0
    status = _OK
    bad_stage = False
    eps = 2.220446049250313e-16

    while t < t1:
        if n_acc + n_rej >= max_steps:
            status = _BUDGET
            break
        last = t + 1.01 * h >= t1
        if last:
            h = t1 - t
        K[0] = f
        finite = True
        for s in range(1, 7):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                yt[i] = y[i] + h * acc
            K[s] = _RHS(t + C[s] * h, yt, args)
            if not _all_finite(K[s]):
                finite = False
                break
        err = 0.0
        if finite:
            # yt now holds the 5th order solution (last stage row equals B)
            for i in range(n):
                e = 0.0
                for j in range(7):
                    e += E[j] * K[j, i]
                sc = atol + rtol * max(abs(y[i]), abs(yt[i]))
                err = max(err, abs(h * e) / sc)
        if finite and err <= 1.0:
            for i in range(n):
                for m in range(4):
                    acc = 0.0
                    for j in range(7):
                        acc += K[j, i] * P[j, m]
                    qs[n_acc, i, m] = acc
            t = t1 if last else t + h
            y[:] = yt
            f = K[6].copy()
            if clamp_idx >= 0 and y[clamp_idx] < clamp_min:
                y[clamp_idx] = clamp_min
                f = _RHS(t, y, args)
                n_clamp += 1
            n_acc += 1
            if n_acc + 1 > cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, n))
                qs2 = np.empty((cap, n, 4))
                ts2[:n_acc] = ts[:n_acc]
                ys2[:n_acc] = ys[:n_acc]
                qs2[:n_acc] = qs[:n_acc]
                ts, ys, qs = ts2, ys2, qs2
            ts[n_acc] = t
            ys[n_acc] = y
            bad_stage = False
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * fac, h_max)
        else:
            n_rej += 1
            if not finite:
                bad_stage = True
                fac = 0.2
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
                fac = min(fac, 0.9)
            h = h * fac
        if h < 16.0 * eps * max(abs(t), 1e-300) and t < t1:
            status = _DOMAIN if bad_stage else _UNDERFLOW
            break

    return ts[: n_acc + 1].copy(), ys[: n_acc + 1].copy(), qs[:n_acc].copy(), status, n_rej, n_clamp, t


def _specialise(rhs, name: str):
    """Copy of :func:`_dopri_loop` whose right-hand side is the global ``_RHS``.

    Calling the right-hand side through a module-level name, rather than
    passing it as an argument, lets numba cache the compiled kernel.
    """
    g = dict(_dopri_loop.__globals__)
    g["_RHS"] = rhs
    fn = types.FunctionType(_dopri_loop.__code__, g, name)
    fn.__qualname__ = name
    return fn


@dataclass
class Trajectory:
    """Accepted steps of one integration with their dense-output coefficients.

    ``coeffs[i]`` holds, for the step from ``times[i]`` to ``times[i+1]``, the
    polynomial coefficients of the 4th order continuous extension.
    """

    times: np.ndarray
    states: np.ndarray
    coeffs: np.ndarray
    n_rejected: int = 0
    n_clamped: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(t)

    def evaluate(self, t) -> np.ndarray:
        """Interpolated state(s) at time(s) ``t``; shape ``(len(t), dim)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.n_steps == 0:
            raise ValueError("empty trajectory")
        if np.any(t < self.t0 - 1e-12 * max(1.0, abs(self.t0))) or np.any(t > self.t1 + 1e-12 * max(1.0, abs(self.t1))):
            raise ValueError("evaluation outside the integrated interval")
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.n_steps - 1)
        h = self.times[idx + 1] - self.times[idx]
        th = (t - self.times[idx]) / h
        out = np.empty((t.size, self.states.shape[1]))
        for j in range(self.states.shape[1]):
            c = self.coeffs[idx, j]
            poly = (((c[:, 3] * th + c[:, 2]) * th + c[:, 1]) * th + c[:, 0]) * th
            out[:, j] = self.states[idx, j] + h * poly
        # exact stored states at step endpoints (e.g. projected/clamped values)
        hit = self.times[idx] == t
        out[hit] = self.states[idx[hit]]
        last = t == self.t1
        out[last] = self.states[-1]
        return out

    @staticmethod
    def concatenate(parts: list["Trajectory"]) -> "Trajectory":
        times = [parts[0].times] + [p.times[1:] for p in parts[1:]]
        states = [parts[0].states] + [p.states[1:] for p in parts[1:]]
        return Trajectory(
            np.concatenate(times),
            np.concatenate(states),
            np.concatenate([p.coeffs for p in parts]),
            sum(p.n_rejected for p in parts),
            sum(p.n_clamped for p in parts),
        )


def _raise_for_status(status, t, y):
    if status == _BUDGET:
        raise StepBudgetExceeded(f"step budget exhausted at t={t:.6g}, state={y}")
    if status == _UNDERFLOW:
        raise StepUnderflow(f"step size underflow at t={t:.6g}, state={y}")
    if status == _DOMAIN:
        raise DomainError(f"right-hand side left its valid domain near t={t:.6g}, state={y}")


def integrate(rhs, y0, t_span, cfg: IntegratorConfig | None = None, args=(), clamp=None) -> Trajectory:
    """Integrate ``dy/dt = rhs(t, y)`` with the Dormand-Prince 5(4) pair.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y)`` returning the derivative. A numba-compiled function with
        signature ``rhs(t, y, args)`` runs inside the compiled kernel and
        receives ``args``.
    y0 : array_like
    t_span : (float, float)
    cfg : IntegratorConfig, optional
    clamp : (int, float), optional
        Component index and lower bound projected onto after every step.

    Raises
    ------
    StepBudgetExceeded, StepUnderflow, DomainError
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be a nonempty increasing interval")
    y0 = np.array(y0, dtype=float).ravel()
    ci, cm = clamp if clamp is not None else (-1, 0.0)

    if rhs is circuit_rhs:
        kernel = _circuit_kernel
    elif isinstance(rhs, CPUDispatcher):
        kernel = njit(_specialise(rhs, "_user_kernel"))
    else:

        def fun(t, y, _args):
            return np.asarray(rhs(t, y), dtype=float)

        kernel = _specialise(fun, "_python_kernel")
        args = ()
    ts, ys, qs, status, n_rej, n_clamp, t_end = kernel(
        args, t0, t1, y0, cfg.rtol, cfg.atol, cfg.h_init, cfg.h_max, cfg.max_steps, ci, cm, _C, _A, _B, _E, _P
    )
    _raise_for_status(status, t_end, ys[-1])
    if n_clamp:
        log.debug("clamped component %d at %g on %d steps", ci, cm, n_clamp)
    return Trajectory(ts, ys, qs, int(n_rej), int(n_clamp))


def resample(traj: Trajectory, dt: float, t_start: float | None = None):
    """Sample ``traj`` on the uniform grid ``t_start, t_start + dt, ...``.

    Returns
    -------
    t : ndarray, shape (m,)
    y : ndarray, shape (m, dim)
    """
    if traj.n_steps == 0:
        raise ValueError("empty trajectory")
    t0 = traj.t0 if t_start is None else float(t_start)
    span = traj.t1 - t0
    if not (dt > 0 and dt <= span):
        raise ValueError(f"need 0 < dt <= span ({span:g}), got dt={dt:g}")
    m = int(math.floor(span / dt * (1 + 1e-12))) + 1
    t = t0 + dt * np.arange(m)
    t[-1] = min(t[-1], traj.t1)
    return t, traj.evaluate(t)


# -- circuit right-hand sides -----------------------------------------------------
#
# Parameter vector layout shared by the compiled right-hand side.
_I_D, _I_XC, _I_BETA, _I_K, _I_RHO0, _I_GAMMA, _I_KIND = 0, 1, 2, 3, 4, 5, 6
_I_DRIVE, _I_V, _I_DV, _I_OMEGA = 7, 8, 9, 10
_I_SERIES, _I_R, _I_RMIN, _I_A, _I_LAM, _I_GK, _I_R0, _I_ITH, _I_LP, _I_XMAX = 11, 12, 13, 14, 15, 16, 17, 18, 19, 20
_N_PARAMS = 21

_SERIES_FIXED, _SERIES_KERNEL, _SERIES_THRESHOLD = 0, 1, 2


@njit(cache=True)
def circuit_rhs(t, y, P):
    n = y.size
    out = np.empty(n)
    x = y[0]
    q = y[1]
    if not (x < P[_I_XMAX]) or not math.isfinite(q):
        out[:] = np.nan
        return out
    d = P[_I_D]
    V = P[_I_V]
    if P[_I_DRIVE] == 1.0:
        V += P[_I_DV] * math.sin(P[_I_OMEGA] * t)
    vc = q * (d - x)
    R = _memristance(x, d, P[_I_XC], P[_I_BETA], P[_I_RHO0], int(P[_I_KIND]))
    i_m = vc / R
    out[0] = (q * q - _potential_dx(x, d, P[_I_K])) / P[_I_GAMMA]
    kind = P[_I_SERIES]
    if kind == _SERIES_FIXED:
        out[1] = (V - vc) / P[_I_R] - i_m
        return out
    rmin = P[_I_RMIN]
    r = max(y[2], rmin)
    i_r = (V - vc) / r
    out[1] = i_r - i_m
    if kind == _SERIES_KERNEL:
        dr = -P[_I_A] * i_r + P[_I_LAM] * y[3]
        out[3] = (P[_I_R0] - y[2]) - P[_I_GK] * y[3]
    else:
        sig = math.atan(P[_I_LP] * (i_r - P[_I_ITH])) / math.pi + 0.5
        dr = P[_I_A] * r * r * sig - P[_I_LAM] * r * (1.0 - sig)
    if y[2] <= rmin and dr < 0.0:
        dr = 0.0
    out[2] = dr
    return out


_circuit_kernel = njit(cache=True)(_specialise(circuit_rhs, "_circuit_kernel"))


def _pack(p: ModelParams, drive: Drive, series: SeriesElement) -> np.ndarray:
    P = np.zeros(_N_PARAMS)
    P[_I_D], P[_I_XC], P[_I_BETA], P[_I_K] = p.d, p.x_c, p.sharpness, p.k
    P[_I_RHO0], P[_I_GAMMA], P[_I_KIND] = p.rho0, p.gamma_damp, p.kind_code
    P[_I_XMAX] = p.x_max
    if isinstance(drive, DC):
        P[_I_DRIVE], P[_I_V] = 0, drive.V
    elif isinstance(drive, DCPlusAC):
        P[_I_DRIVE], P[_I_V], P[_I_DV], P[_I_OMEGA] = 1, drive.V_dc, drive.delta_V, drive.omega_source
    else:
        raise TypeError(f"drive {drive!r} must be split into DC segments before packing")
    if isinstance(series, FixedResistor):
        P[_I_SERIES], P[_I_R] = _SERIES_FIXED, series.r
    elif isinstance(series, KernelMemristor):
        P[_I_SERIES], P[_I_RMIN] = _SERIES_KERNEL, series.r_min
        P[_I_A], P[_I_LAM], P[_I_GK], P[_I_R0] = series.alpha1, series.lambda1, series.gamma_kernel, series.r0
    elif isinstance(series, ThresholdMemristor):
        P[_I_SERIES], P[_I_RMIN] = _SERIES_THRESHOLD, series.r_min
        P[_I_A], P[_I_LAM] = series.alpha2, series.lambda2
        P[_I_ITH], P[_I_LP] = series.I_thresh, series.lambda_prime
    else:
        raise TypeError(f"unknown series element {series!r}")
    return P


def _initial_vector(init: CircuitState, series: SeriesElement) -> np.ndarray:
    if isinstance(series, FixedResistor):
        return np.array([init.x, init.q])
    if isinstance(series, KernelMemristor):
        return np.array([init.x, init.q, series.init_r, 0.0])
    return np.array([init.x, init.q, series.init_r])


@dataclass
class CircuitTrace:
    """Uniformly sampled circuit signals.

    ``r_series`` is constant for a fixed resistor.
    """

    t: np.ndarray
    x: np.ndarray
    q: np.ndarray
    V_C: np.ndarray
    I_M: np.ndarray
    I_r: np.ndarray
    r_series: np.ndarray
    V_drive: np.ndarray
    dt: float
    trajectory: Trajectory | None = field(default=None, repr=False)

    COLUMNS = ("t", "x", "q", "V_C", "I_M", "I_r", "r_series", "V_drive")

    def __len__(self):
        return len(self.t)

    def window(self, t_from: float) -> "CircuitTrace":
        """Samples with ``t >= t_from`` (drops the transient)."""
        sel = self.t >= t_from - 1e-12
        cols = {c: getattr(self, c)[sel] for c in self.COLUMNS}
        return CircuitTrace(**cols, dt=self.dt, trajectory=self.trajectory)

    def decimate(self, dt: float) -> "CircuitTrace":
        """Every ``k``-th sample, with ``k = round(dt / self.dt)`` (at least 1)."""
        k = max(1, int(round(dt / self.dt)))
        cols = {c: getattr(self, c)[::k] for c in self.COLUMNS}
        return CircuitTrace(**cols, dt=self.dt * k, trajectory=self.trajectory)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.COLUMNS])

    def to_csv(self, path, precision: int = 17) -> None:
        """Write all columns; ``precision=17`` writes exact round-trip values."""
        fmt = repr if precision >= 17 else (lambda v: f"{v:.{precision}g}")
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.as_array().tolist():
                fh.write(",".join(map(fmt, row)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "CircuitTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = dict(zip(cls.COLUMNS, data.T))
        dt = float(cols["t"][1] - cols["t"][0]) if len(data) > 1 else 0.0
        return cls(**cols, dt=dt)


def format_float(v, precision: int = 17) -> str:
    """Shortest exact representation at ``precision >= 17``, else ``%.<precision>g``."""
    v = float(v)
    return repr(v) if precision >= 17 else f"{v:.{precision}g}"


def _segments(drive: Drive, T: float):
    """Split a drive into (t_start, t_end, smooth drive) pieces."""
    if not isinstance(drive, PiecewiseDC):
        return [(0.0, T, drive)]
    out = []
    t = 0.0
    for i, (dur, V) in enumerate(drive.segments):
        last = i == len(drive.segments) - 1
        end = T if last else min(t + dur, T)
        if end > t:
            out.append((t, end, DC(V)))
        t += dur
        if t >= T:
            break
    return out


def simulate_circuit(
    p: ModelParams,
    drive: Drive,
    series: SeriesElement,
    init: CircuitState,
    T: float,
    cfg: IntegratorConfig | None = None,
    dt_out: float = DEFAULT_DT_OUT,
    t_from: float = 0.0,
) -> CircuitTrace:
    """Integrate the circuit for ``T`` time units and sample its signals.

    A fixed resistor gives the 2-state system ``(x, q)``. The kernel memristor
    adds the resistance ``r`` and the memory integral ``s`` (an exact
    reduction of the exponential-kernel convolution), and the threshold
    memristor adds ``r`` alone. Memristor resistances are kept at or above
    ``r_min``. Samples start at ``t_from``.
    """
    if not T > 0:
        raise ValueError("T must be > 0")
    if init.x >= p.x_max:
        raise DomainError(f"initial x={init.x} violates x < d - x_guard")
    cfg = cfg or IntegratorConfig()
    y = _initial_vector(init, series)
    clamp = None if isinstance(series, FixedResistor) else (2, series.r_min)
    parts = []
    for t_a, t_b, seg_drive in _segments(drive, T):
        part = integrate(circuit_rhs, y, (t_a, t_b), cfg, args=_pack(p, seg_drive, series), clamp=clamp)
        parts.append(part)
        y = part.states[-1].copy()
    traj = parts[0] if len(parts) == 1 else Trajectory.concatenate(parts)
    if traj.n_clamped:
        log.info("series resistance pinned at r_min on %d steps", traj.n_clamped)
    t, Y = resample(traj, dt_out, t_start=t_from)
    return trace_from_states(p, drive, series, t, Y, dt_out, traj)


def trace_from_states(p, drive, series, t, Y, dt, traj=None) -> CircuitTrace:
    x, q = Y[:, 0], Y[:, 1]
    V_C = q * (p.d - x)
    I_M = V_C / _memristance(x, p.d, p.x_c, p.sharpness, p.rho0, p.kind_code)
    if isinstance(series, FixedResistor):
        r = np.full_like(t, series.r)
    else:
        r = np.maximum(Y[:, 2], series.r_min)
    V = np.asarray(drive.value(t), dtype=float) * np.ones_like(t)
    I_r = (V - V_C) / r
    return CircuitTrace(t, x, q, V_C, I_M, I_r, r, V, dt, traj)
