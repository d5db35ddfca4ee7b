"""Fixed points, limit cycles and bifurcation thresholds versus DC voltage."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .integrator import DEFAULT_DT_OUT, IntegratorConfig, integrate, resample, simulate_circuit, circuit_rhs, _pack
from .model import (
    DC,
    CircuitState,
    FixedResistor,
    ModelParams,
    TABLE1_R,
    TYPE_I,
    _field,
    _jac,
)
from .signals import LIMIT_CYCLE_INIT, upcrossings

log = logging.getLogger(__name__)

__all__ = [
    "FixedPointKind",
    "FixedPoint",
    "DegenerateFixedPoint",
    "BracketNotFound",
    "Thresholds",
    "LimitCycleInfo",
    "PhasePortrait",
    "classify",
    "find_fixed_points",
    "default_seeds",
    "analytic_v1prime",
    "detect_limit_cycle",
    "scan_thresholds",
    "scan_resistance",
    "phase_portrait",
]


class DegenerateFixedPoint(ValueError):
    pass


class BracketNotFound(RuntimeError):
    pass


class FixedPointKind(str, enum.Enum):
    SINK_NODE = "sink"
    SINK_SPIRAL = "sink (spiral)"
    SADDLE = "saddle"
    SOURCE_NODE = "source"
    SPIRAL_SOURCE = "spiral source"

    @property
    def stable(self) -> bool:
        return self in (FixedPointKind.SINK_NODE, FixedPointKind.SINK_SPIRAL)


def classify(det: float, tr: float, delta: float, tol: float = 1e-9) -> FixedPointKind:
    """Planar linearisation type from determinant, trace and discriminant.

    Raises :class:`DegenerateFixedPoint` when ``det`` vanishes, or ``tr``
    vanishes with ``det > 0``, relative to the matrix scale.
    """
    scale = max(abs(det), tr * tr, abs(delta))
    if scale == 0 or abs(det) <= tol * scale:
        raise DegenerateFixedPoint(f"det={det:g} is zero within tolerance")
    if det < 0:
        return FixedPointKind.SADDLE
    if abs(tr) <= tol * math.sqrt(det):
        raise DegenerateFixedPoint(f"tr={tr:g} is zero within tolerance (centre)")
    spiral = delta < 0
    if tr < 0:
        return FixedPointKind.SINK_SPIRAL if spiral else FixedPointKind.SINK_NODE
    return FixedPointKind.SPIRAL_SOURCE if spiral else FixedPointKind.SOURCE_NODE


@dataclass(frozen=True)
class FixedPoint:
    V: float
    x: float
    q: float
    det: float
    tr: float
    delta: float
    kind: FixedPointKind
    residual: float = 0.0

    @property
    def state(self) -> CircuitState:
        return CircuitState(self.x, self.q)


# -- Newton ----------------------------------------------------------------------


def default_seeds(p: ModelParams, n_grid: int = 20, n_contact: int = 400) -> np.ndarray:
    """Newton starting points.

    A regular ``n_grid x n_grid`` grid over ``x in [0, d-0.3]``, ``q in [0, 3]``
    plus points on the ``dx/dt = 0`` nullcline, dense around the contact onset
    where fixed points sit within ~1e-4 of ``x_c``.
    """
    xs = np.linspace(0.0, p.d - 0.3, n_grid)
    qs = np.linspace(0.0, 3.0, n_grid)
    X, Q = np.meshgrid(xs, qs, indexing="ij")
    grid = np.column_stack([X.ravel(), Q.ravel()])

    offsets = np.geomspace(1e-6, 0.05, n_contact // 4)
    xn = np.concatenate([
        np.linspace(0.0, p.d - 0.3, n_contact // 2),
        p.x_c - offsets,
        p.x_c + offsets,
    ])
    xn = xn[xn < p.d - 0.3]
    g = 1.0 / (p.d - xn)
    dU = p.k * xn + 4.0 * (12.0 * g**13 - 6.0 * g**7)
    nullcline = np.column_stack([xn, np.sqrt(np.maximum(dU, 0.0))])
    return np.vstack([grid, nullcline])


def _field_arr(p, V, r, X):
    fx, fq = _field(X[:, 0], X[:, 1], float(V), float(r), p.d, p.x_c, p.sharpness, p.k, p.rho0, p.gamma_damp, p.kind_code)
    return np.column_stack([fx, fq])


@njit(cache=True)
def _newton_batch(seeds, V, r, d, x_c, beta, k, rho0, gamma, kind, x_lo, x_hi, tol, max_iter, max_halvings):
    """Damped Newton from every seed; returns final points and residual norms.

    A step is halved until the residual norm decreases; a seed whose residual
    cannot be decreased is abandoned (residual set to inf).
    """
    n = seeds.shape[0]
    out = seeds.copy()
    res = np.full(n, np.inf)
    for i in range(n):
        x = seeds[i, 0]
        q = seeds[i, 1]
        fx, fq = _field(x, q, V, r, d, x_c, beta, k, rho0, gamma, kind)
        nrm = math.hypot(fx, fq)
        if not math.isfinite(nrm):
            continue
        for _ in range(max_iter):
            if nrm < tol:
                break
            a, b, c, e = _jac(x, q, r, d, x_c, beta, k, rho0, gamma, kind)
            det = a * e - b * c
            sx = -(e * fx - b * fq) / det
            sq = -(-c * fx + a * fq) / det
            if not (math.isfinite(sx) and math.isfinite(sq)):
                nrm = np.inf
                break
            lam = 1.0
            improved = False
            for _h in range(max_halvings + 1):
                xn = x + lam * sx
                qn = q + lam * sq
                if x_lo < xn < x_hi:
                    gx, gq = _field(xn, qn, V, r, d, x_c, beta, k, rho0, gamma, kind)
                    nn = math.hypot(gx, gq)
                    if nn < nrm:
                        x, q, fx, fq, nrm = xn, qn, gx, gq, nn
                        improved = True
                        break
                lam *= 0.5
            if not improved:
                nrm = np.inf
                break
        out[i, 0] = x
        out[i, 1] = q
        res[i] = nrm
    return out, res


def _newton(p: ModelParams, V: float, r: float, X: np.ndarray, tol: float, max_iter: int, max_halvings: int = 30):
    pts, res = _newton_batch(
        np.ascontiguousarray(X, dtype=float), float(V), float(r), p.d, p.x_c, p.sharpness, p.k, p.rho0,
        p.gamma_damp, p.kind_code, -p.d, p.x_max, tol, max_iter, max_halvings,
    )
    conv = res < tol
    return pts[conv], res[conv]


def find_fixed_points(
    p: ModelParams,
    V: float,
    seeds=None,
    r: float = TABLE1_R,
    tol: float = 1e-6,
    max_iter: int = 100,
    dedup: float = 1e-6,
    extra_seeds=None,
) -> list[FixedPoint]:
    """All fixed points reachable by damped Newton from the seeds.

    Roots closer than ``dedup`` are merged. Each is classified with the
    analytic Jacobian. Results are sorted by ``x``.
    """
    S = default_seeds(p) if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=float))
    if extra_seeds is not None and len(extra_seeds):
        S = np.vstack([S, np.atleast_2d(np.asarray(extra_seeds, dtype=float))])
    if V < 0:
        # field is odd in (q, V); mirror the seeds
        S = S * np.array([1.0, -1.0])
    roots, res = _newton(p, V, r, S, tol, max_iter)
    order = np.lexsort((roots[:, 1], roots[:, 0]))
    roots, res = roots[order], res[order]
    kept: list[tuple[np.ndarray, float]] = []
    for xq, rn in zip(roots, res):
        for i, (k, kr) in enumerate(kept):
            if np.hypot(*(xq - k)) < dedup:
                if rn < kr:
                    kept[i] = (xq, rn)
                break
        else:
            kept.append((xq, rn))
    if not kept:
        log.warning("Newton failed from every seed at V=%g", V)
    out = []
    for xq, rn in kept:
        a, b, c, e = _jac(float(xq[0]), float(xq[1]), float(r), p.d, p.x_c, p.sharpness, p.k, p.rho0, p.gamma_damp, p.kind_code)
        det = a * e - b * c
        tr = a + e
        delta = tr * tr - 4 * det
        out.append(FixedPoint(float(V), float(xq[0]), float(xq[1]), det, tr, delta, classify(det, tr, delta), float(rn)))
    return out


def analytic_v1prime(p: ModelParams, r: float = TABLE1_R, rho0_eff: float | None = None) -> float:
    """Sink-saddle fold voltage of the normal-regime approximation.

    Ignores the Lennard-Jones term and the contact drop of ``R``. For type I
    memristance ``R ~ 1``; for type II ``R ~ rho0_eff (d - x)`` with
    ``rho0_eff`` defaulting to ``10 rho0``, the far-from-contact limit of
    the type II law.
    """
    if p.memristance == TYPE_I:
        return 2.0 * (1.0 + r) * math.sqrt(p.k * (p.d / 3.0) ** 3)
    rho = 10.0 * p.rho0 if rho0_eff is None else rho0_eff
    return 2.0 * math.sqrt(p.k * ((p.d + r / rho) / 3.0) ** 3)


# -- limit cycles -----------------------------------------------------------------


@dataclass
class LimitCycleInfo:
    period: float
    omega: float
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    V_C: np.ndarray = field(repr=False)
    x_range: tuple = (0.0, 0.0)
    vc_range: tuple = (0.0, 0.0)
    n_crossings: int = 0
    closure_error: float = 0.0


def detect_limit_cycle(
    p: ModelParams,
    V: float,
    init: CircuitState = LIMIT_CYCLE_INIT,
    T: float = 1.5,
    r: float = TABLE1_R,
    cfg: IntegratorConfig | None = None,
    dt_out: float = DEFAULT_DT_OUT,
    min_crossings: int = 5,
    period_tol: float = 0.01,
    trace=None,
) -> LimitCycleInfo | None:
    """Periodic spiking attractor reached from ``init``, if any.

    The first third of the run is discarded. A cycle is reported when ``x``
    crosses ``x_c`` upwards at least ``min_crossings`` times with all
    intervals within ``period_tol`` of their mean.
    """
    if trace is None:
        trace = simulate_circuit(p, DC(V), FixedResistor(r), init, T, cfg, dt_out, t_from=T / 3)
    tc = upcrossings(trace.t, trace.x, p.x_c)
    if len(tc) < min_crossings:
        return None
    isi = np.diff(tc)
    period = float(isi.mean())
    if np.max(np.abs(isi - period)) > period_tol * period:
        return None
    # one period ending at the last crossing
    t_end = tc[-1]
    sel = (trace.t >= t_end - period) & (trace.t <= t_end)
    if sel.sum() < 4:
        return None
    xw, qw, vw = trace.x[sel], trace.q[sel], trace.V_C[sel]
    closure = float(np.hypot(xw[-1] - xw[0], qw[-1] - qw[0]))
    return LimitCycleInfo(
        period=period,
        omega=2 * math.pi / period,
        t=trace.t[sel],
        x=xw,
        q=qw,
        V_C=vw,
        x_range=(float(xw.min()), float(xw.max())),
        vc_range=(float(vw.min()), float(vw.max())),
        n_crossings=len(tc),
        closure_error=closure,
    )


# -- threshold scans -----------------------------------------------------------


@dataclass
class Thresholds:
    V0: float
    V1: float
    V1_prime: float
    V2: float
    folds: list = field(default_factory=list)
    grid_step: float = 0.05
    bisect_tol: float = 1e-3
    counts: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "V0": self.V0,
            "V1": self.V1,
            "V1_prime": self.V1_prime,
            "V2": self.V2,
            "folds": [list(f) for f in self.folds],
            "grid_step": self.grid_step,
            "bisect_tol": self.bisect_tol,
        }


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    """Boundary between ``pred(lo)`` and ``pred(hi)`` (which must differ)."""
    plo = pred(lo)
    if pred(hi) == plo:
        raise BracketNotFound(f"no change between {lo} and {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid) == plo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fixed_point_folds(p: ModelParams, V_range=(0.0, 18.0), grid: float = 0.05, bisect_tol: float = 1e-3, r: float = TABLE1_R):
    """Voltages where the number of fixed points changes.

    Returns
    -------
    folds : list of (V, count_below, count_above)
    counts : list of (V, count) on the grid
    """
    Vs = np.arange(V_range[0], V_range[1] + 0.5 * grid, grid)
    counts = []
    prev = None
    cache: dict[float, list[FixedPoint]] = {}

    def fps(V, near=None):
        if V not in cache:
            extra = None if near is None else np.array([[f.x, f.q] for f in near])
            cache[V] = find_fixed_points(p, V, r=r, extra_seeds=extra)
        return cache[V]

    for V in Vs:
        cur = fps(float(V), prev)
        counts.append((float(V), len(cur)))
        prev = cur
    folds = []
    for (Va, na), (Vb, nb) in zip(counts, counts[1:]):
        if na == nb:
            continue
        near = fps(Va) + fps(Vb)
        Vf = _bisect(lambda V: len(fps(V, near)), Va, Vb, bisect_tol)
        folds.append((Vf, na, nb))
    return folds, counts


def scan_thresholds(
    p: ModelParams,
    V_range=(0.0, 18.0),
    grid: float = 0.05,
    bisect_tol: float = 1e-3,
    r: float = TABLE1_R,
    init: CircuitState = LIMIT_CYCLE_INIT,
    T: float = 1.5,
    cfg: IntegratorConfig | None = None,
) -> Thresholds:
    """Locate the bifurcation voltages V0 < V1 < V1' < V2.

    V0 and V1' are the first 1->3 and the following 3->1 change of the
    fixed-point count. V1 and V2 bound the voltages at which a limit cycle is
    reached from ``init``; they are found by bisection on
    :func:`detect_limit_cycle`.
    """
    folds, counts = fixed_point_folds(p, V_range, grid, bisect_tol, r)
    up = [f for f in folds if f[1] < f[2]]
    if not up:
        raise BracketNotFound("no fixed-point nucleation found on the grid")
    V0 = up[0][0]
    down = [f for f in folds if f[0] > V0 and f[1] > f[2]]
    if not down:
        raise BracketNotFound("no sink-saddle annihilation found above V0")
    V1p = down[0][0]

    def has_cycle(V):
        return detect_limit_cycle(p, V, init, T, r, cfg) is not None

    V1 = _bisect(has_cycle, V0, V1p + 2 * bisect_tol, bisect_tol)
    V2 = _bisect(has_cycle, V1p + 2 * bisect_tol, V_range[1], bisect_tol)
    return Thresholds(V0, V1, V1p, V2, folds, grid, bisect_tol, counts)


@dataclass
class ResistanceScan:
    V: float
    r: np.ndarray
    has_cycle: np.ndarray
    n_fixed: np.ndarray
    r2: float | None
    r1: float | None

    def as_rows(self):
        return [(float(a), bool(b), int(c)) for a, b, c in zip(self.r, self.has_cycle, self.n_fixed)]


def scan_resistance(
    p: ModelParams,
    V: float,
    r_values,
    init: CircuitState = LIMIT_CYCLE_INIT,
    T: float = 1.5,
    bisect_tol: float | None = None,
    cfg: IntegratorConfig | None = None,
) -> ResistanceScan:
    """Series-resistance sweep at fixed ``V``: cycle existence and fixed-point count.

    ``r2`` and ``r1`` are the lower and upper edges of the spiking window on
    the sampled grid, refined by bisection when ``bisect_tol`` is given.
    """
    r_values = np.asarray(r_values, dtype=float)
    cyc = np.array([detect_limit_cycle(p, V, init, T, rv, cfg) is not None for rv in r_values])
    nfp = np.array([len(find_fixed_points(p, V, r=rv)) for rv in r_values])
    r2 = r1 = None
    idx = np.flatnonzero(cyc)
    if idx.size:

        def pred(rv):
            return detect_limit_cycle(p, V, init, T, rv, cfg) is not None

        i0, i1 = idx[0], idx[-1]
        if i0 > 0:
            r2 = _bisect(pred, r_values[i0 - 1], r_values[i0], bisect_tol) if bisect_tol else r_values[i0]
        if i1 < len(r_values) - 1:
            r1 = _bisect(pred, r_values[i1], r_values[i1 + 1], bisect_tol) if bisect_tol else r_values[i1]
    return ResistanceScan(V, r_values, cyc, nfp, r2, r1)


# -- portraits -----------------------------------------------------------------


@dataclass
class PortraitTrajectory:
    init: tuple
    t: np.ndarray
    x: np.ndarray
    q: np.ndarray
    ok: bool
    terminal: str
    error: str = ""


@dataclass
class PhasePortrait:
    V: float
    X: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    W: np.ndarray
    fixed_points: list
    trajectories: list


def _edge_points(window, n_edge):
    (x0, x1), (q0, q1) = window
    s = np.linspace(0, 1, n_edge, endpoint=False)
    pts = [(x0 + (x1 - x0) * u, q0) for u in s]
    pts += [(x1, q0 + (q1 - q0) * u) for u in s]
    pts += [(x1 - (x1 - x0) * u, q1) for u in s]
    pts += [(x0, q1 - (q1 - q0) * u) for u in s]
    return pts


def _terminal_kind(p, fps, t, x, q, tol=1e-2):
    sinks = [f for f in fps if f.kind.stable]
    for f in sinks:
        if math.hypot(x[-1] - f.x, q[-1] - f.q) < tol:
            return "sink"
    tail = t >= t[-1] - 0.3 * (t[-1] - t[0])
    if len(upcrossings(t[tail], x[tail], p.x_c)) >= 3:
        return "cycle"
    return "other"


def phase_portrait(
    p: ModelParams,
    V: float,
    window=None,
    n_edge: int = 6,
    t_evolve: float = 0.05,
    n_grid: int = 25,
    r: float = TABLE1_R,
    ring_radius: float = 0.02,
    n_ring: int = 6,
    dt_out: float = 1e-5,
    cfg: IntegratorConfig | None = None,
) -> PhasePortrait:
    """Normalised flow field plus a bundle of trajectories.

    Trajectories start evenly spaced along the window edge and on a small
    ring around each spiral source. A failed trajectory is kept with
    ``ok=False`` and its error message.
    """
    if window is None:
        window = ((0.0, p.d - 0.6), (0.0, 3.0))
    (x0, x1), (q0, q1) = window
    if x1 >= p.x_max:
        raise ValueError("portrait window reaches the singular gap")
    xs = np.linspace(x0, x1, n_grid)
    qs = np.linspace(q0, q1, n_grid)
    X, Q = np.meshgrid(xs, qs, indexing="ij")
    F = _field_arr(p, V, r, np.column_stack([X.ravel(), Q.ravel()]))
    nrm = np.hypot(F[:, 0], F[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(nrm > 0, F[:, 0] / nrm, 0.0).reshape(X.shape)
        W = np.where(nrm > 0, F[:, 1] / nrm, 0.0).reshape(X.shape)

    fps = find_fixed_points(p, V, r=r)
    inits = _edge_points(window, n_edge)
    for f in fps:
        if f.kind == FixedPointKind.SPIRAL_SOURCE:
            for a in np.linspace(0, 2 * math.pi, n_ring, endpoint=False):
                inits.append((f.x + ring_radius * math.cos(a), f.q + ring_radius * math.sin(a)))

    P = _pack(p, DC(V), FixedResistor(r))
    trajs = []
    for xi, qi in inits:
        try:
            tr = integrate(circuit_rhs, [xi, qi], (0.0, t_evolve), cfg, args=P)
            t, Y = resample(tr, dt_out)
            trajs.append(PortraitTrajectory((xi, qi), t, Y[:, 0], Y[:, 1], True, _terminal_kind(p, fps, t, Y[:, 0], Y[:, 1])))
        except Exception as exc:  # isolated per trajectory
            log.warning("portrait trajectory from (%g, %g) failed: %s", xi, qi, exc)
            trajs.append(PortraitTrajectory((xi, qi), np.empty(0), np.empty(0), np.empty(0), False, "failed", str(exc)))
    return PhasePortrait(float(V), X, Q, U, W, fps, trajs)
