"""Named, reproducible experiments that regenerate the reference scenarios.

Each experiment runs a fixed scenario, evaluates embedded checks against the
reference numbers or qualitative behaviour, and optionally writes CSV data,
figures and a JSON report into ``<out_dir>/<name>/``.

Settings of an experiment are listed in its registry entry and can be
overridden by name; unknown names are rejected.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .integrator import IntegratorConfig, format_float, simulate_circuit
from .model import (
    DC,
    DCPlusAC,
    CircuitState,
    FixedResistor,
    KernelMemristor,
    ModelParams,
    PiecewiseDC,
    TABLE1_R,
    TYPE_I,
    TYPE_II,
    ThresholdMemristor,
    vector_field,
)
from .phase import (
    _bisect,
    analytic_v1prime,
    detect_limit_cycle,
    find_fixed_points,
    fixed_point_folds,
    phase_portrait,
    scan_thresholds,
)
from .signals import (
    LIMIT_CYCLE_INIT,
    classify_regime,
    detect_spikes,
    lock_interval,
    natural_frequency_dc,
    segment_bursts,
    single_sided_spectrum,
    skewness,
    spectral_peaks,
    sync_analysis,
    sync_report_from_trace,
)
from .tables import TYPE_I_ROWS, TYPE_II_ROWS

log = logging.getLogger(__name__)

__all__ = [
    "Check",
    "ExperimentSpec",
    "ExperimentReport",
    "UnknownExperiment",
    "OverrideError",
    "REGISTRY",
    "list_experiments",
    "run_experiment",
    "match_table",
]

ORIGIN = CircuitState(0.0, 0.0)


class UnknownExperiment(KeyError):
    def __str__(self):
        return f"unknown experiment {self.args[0]!r}; registered: {', '.join(REGISTRY)}"


class OverrideError(ValueError):
    pass


def _plain(v):
    """JSON-friendly copy of ``v`` (numpy scalars, tuples, fractions, enums)."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, Fraction):
        return str(v)
    if hasattr(v, "value") and not isinstance(v, (int, str)):
        return v.value
    return v


@dataclass
class Check:
    name: str
    measured: Any
    expected: Any
    tolerance: Any
    passed: bool
    anchor: str
    note: str = ""

    def as_dict(self) -> dict:
        return _plain(asdict(self))


@dataclass
class ExperimentSpec:
    """What to run and where to write it.

    ``overrides`` replace entries of the experiment's settings by name.
    ``formats`` selects the artifacts: ``csv`` data, a ``json`` report and
    ``svg``/``png`` figures. Nothing is written when ``out_dir`` is None.
    """

    name: str
    params: ModelParams = field(default_factory=ModelParams)
    overrides: dict = field(default_factory=dict)
    out_dir: Path | str | None = None
    cfg: IntegratorConfig | None = None
    r: float = TABLE1_R
    precision: int = 17
    formats: tuple = ("csv", "json", "svg")


@dataclass
class ExperimentReport:
    name: str
    anchor: str
    description: str
    params: dict
    settings: dict
    checks: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "description": self.description,
            "passed": self.passed,
            "params": _plain(self.params),
            "settings": _plain(self.settings),
            "checks": [c.as_dict() for c in self.checks],
            "metrics": _plain(self.metrics),
            "artifacts": list(self.artifacts),
        }


@dataclass(frozen=True)
class _Entry:
    name: str
    func: Callable
    anchor: str
    description: str
    settings: dict


REGISTRY: dict[str, _Entry] = {}


def _register(name: str, anchor: str, description: str, **settings):
    def deco(func):
        REGISTRY[name] = _Entry(name, func, anchor, description, settings)
        return func

    return deco


def list_experiments() -> list[tuple[str, str]]:
    return [(e.name, e.description) for e in REGISTRY.values()]


def _coerce(default, value, key):
    """Convert an override (possibly a string) to the type of ``default``."""
    try:
        if isinstance(value, str):
            if isinstance(default, bool):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            if isinstance(default, tuple):
                parts = [s for s in value.replace(";", ",").split(",") if s.strip()]
                return tuple(_coerce(default[0] if default else 0.0, s.strip(), key) for s in parts)
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
            return value
        if isinstance(default, tuple):
            return tuple(value) if isinstance(value, (list, tuple)) else (value,)
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, int):
            return int(value)
        return value
    except (TypeError, ValueError):
        raise OverrideError(f"bad value {value!r} for setting {key!r} (expected like {default!r})") from None


class _Context:
    """Per-run state: settings, check collection and artifact writers."""

    def __init__(self, entry: _Entry, spec: ExperimentSpec):
        unknown = sorted(set(spec.overrides) - set(entry.settings))
        if unknown:
            raise OverrideError(
                f"unknown setting(s) {unknown} for {entry.name}; valid: {sorted(entry.settings)}"
            )
        self.entry = entry
        self.p = spec.params
        self.r = spec.r
        self.cfg = spec.cfg
        self.s = {k: _coerce(v, spec.overrides[k], k) if k in spec.overrides else v for k, v in entry.settings.items()}
        self.precision = spec.precision
        self.formats = tuple(spec.formats)
        self.dir = None if spec.out_dir is None else Path(spec.out_dir) / entry.name
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.report = ExperimentReport(entry.name, entry.anchor, entry.description, asdict(self.p), dict(self.s))
        self.report.params["r"] = self.r

    # checks --------------------------------------------------------------
    def check(self, name, measured, expected, tolerance, passed, note=""):
        c = Check(name, measured, expected, tolerance, bool(passed), f"{self.entry.name}: {self.entry.anchor}", note)
        self.report.checks.append(c)
        log.info("[%s] %s: %s", "PASS" if c.passed else "FAIL", name, measured)
        return c

    def check_close(self, name, measured, expected, tol, note=""):
        ok = measured is not None and math.isfinite(measured) and abs(measured - expected) <= tol
        return self.check(name, measured, expected, tol, ok, note)

    def check_between(self, name, measured, lo, hi, note=""):
        ok = measured is not None and lo < measured < hi
        return self.check(name, measured, [lo, hi], "open interval", ok, note)

    def metric(self, key, value):
        self.report.metrics[key] = value

    # artifacts -----------------------------------------------------------
    def _path(self, fname):
        path = self.dir / fname
        self.report.artifacts.append(fname)
        return path

    def fmt(self, v):
        if isinstance(v, (float, np.floating)):
            return format_float(v, self.precision)
        return str(_plain(v))

    def write_csv(self, fname, header, rows):
        if self.dir is None or "csv" not in self.formats:
            return
        with open(self._path(fname), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([self.fmt(v) for v in row])

    def write_trace(self, fname, trace):
        if self.dir is None or "csv" not in self.formats:
            return
        trace.to_csv(self._path(fname), precision=self.precision)

    def figure(self, stem, plot, *args, **kw):
        if self.dir is None:
            return
        for ext in ("svg", "png"):
            if ext in self.formats:
                plot(*args, path=self._path(f"{stem}.{ext}"), **kw)

    def finish(self) -> ExperimentReport:
        if self.dir is not None and "json" in self.formats:
            path = self.dir / "report.json"
            self.report.artifacts.append("report.json")
            path.write_text(json.dumps(self.report.as_dict(), indent=2, sort_keys=False) + "\n")
        return self.report


def run_experiment(spec: ExperimentSpec | str, **kw) -> ExperimentReport:
    """Run a registered experiment.

    Parameters
    ----------
    spec : ExperimentSpec or str
        Full specification, or just a name (remaining fields from ``kw``).

    Raises
    ------
    UnknownExperiment
        If the name is not registered.
    OverrideError
        If an override names a setting the experiment does not have.
    """
    if isinstance(spec, str):
        spec = ExperimentSpec(spec, **kw)
    if spec.name not in REGISTRY:
        raise UnknownExperiment(spec.name)
    ctx = _Context(REGISTRY[spec.name], spec)
    ctx.entry.func(ctx)
    return ctx.finish()


def _plotting():
    from . import plotting

    return plotting


def _field_norm(p, V, r, x, q):
    fx, fq = vector_field(p, DC(V), FixedResistor(r), CircuitState(x, q))
    return float(math.hypot(fx, fq))


# -- fig3 -----------------------------------------------------------------------


@_register(
    "fig3-transients",
    "response to a voltage step from the discharged state",
    "Step response from (0,0): periodic spiking, positive spikes, static regime",
    V_spiking=(8.0829, 15.0111),
    V_static=7.8520,
    T=1.5,
    T_static=0.5,
    V_regime_I=7.0183,
    regime_III_V=15.0111,
    dt_out=1e-6,
    csv_dt=1e-4,
    zoom=0.01,
    cv_max=0.01,
    field_tol=1e-3,
    skew_threshold=1.0,
)
def _fig3(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    pl = _plotting()
    runs = [(V, s["T"]) for V in s["V_spiking"]] + [(s["V_static"], s["T_static"])]
    for V, T in runs:
        tr = simulate_circuit(p, DC(V), FixedResistor(r), ORIGIN, T, ctx.cfg, s["dt_out"])
        tag = f"V{V:g}"
        ctx.write_trace(f"trace_{tag}.csv", tr.decimate(s["csv_dt"]))
        zoom = tr.window(T - s["zoom"])
        ctx.write_trace(f"trace_{tag}_zoom.csv", zoom)
        ctx.figure(f"trace_{tag}", pl.plot_trace, tr.decimate(s["csv_dt"] / 10), title=f"V = {V:g}", x_c=p.x_c)
        ctx.figure(f"trace_{tag}_zoom", pl.plot_trace, zoom, title=f"V = {V:g} (final {s['zoom']:g})", x_c=p.x_c)
        post = tr.window(T / 3)
        train = detect_spikes(post, p)
        if V == s["V_static"]:
            norm = _field_norm(p, V, r, tr.x[-1], tr.q[-1])
            ctx.check(f"V={V:g}: static, terminal field norm", norm, 0.0, s["field_tol"], norm < s["field_tol"])
            ctx.check(f"V={V:g}: no spikes after transient", len(train), 0, 0, len(train) == 0)
            continue
        isi = train.intervals
        cv = float(isi.std() / isi.mean()) if len(isi) > 1 else float("nan")
        ctx.check(f"V={V:g}: periodic spiking, inter-spike CV", cv, 0.0, s["cv_max"], len(isi) >= 4 and cv < s["cv_max"],
                  note=f"{len(train)} spikes after t={T / 3:g}")
        ctx.metric(f"omega_V{V:g}", 2 * math.pi / isi.mean() if len(isi) else None)
        if V == s["regime_III_V"]:
            lc = detect_limit_cycle(p, V, trace=post)
            _regime_check(ctx, V, lc, "III")

    V = s["V_regime_I"]
    lc = detect_limit_cycle(p, V, LIMIT_CYCLE_INIT, s["T"], r, ctx.cfg, s["dt_out"])
    _regime_check(ctx, V, lc, "I", note="started next to the cycle at (6.6, 2.0207)")


def _regime_check(ctx, V, lc, expected, note=""):
    if lc is None:
        ctx.check(f"V={V:g}: regime {expected}", None, expected, "exact", False, "no limit cycle detected")
        return
    reg = classify_regime(lc.V_C, ctx.s["skew_threshold"])
    ctx.metric(f"skewness_V{V:g}", skewness(lc.V_C))
    ctx.check(f"V={V:g}: regime {expected}", reg.value, expected, "exact", reg.value == expected, note)


# -- fig4 -----------------------------------------------------------------------


@_register(
    "fig4-phase-diagram",
    "fixed points and attractors versus applied voltage",
    "Phase portraits and the thresholds V0, V1, V1', V2",
    V_portraits=(7.0437, 7.9674, 15.5),
    n_edge=6,
    t_evolve=0.05,
    V_max=18.0,
    grid=0.05,
    bisect_tol=1e-3,
    T=1.5,
    V0_expected=3.4156,
    V0_tol=0.01,
    V1p_expected=7.9582,
    V1p_tol=1e-3,
    V1p_analytic_tol=2e-3,
    V1_bracket=(7.0437, 7.0645),
    V1_regime_I=7.0183,
    V2_bracket=(15.0561, 15.5),
    V_bistable=7.0437,
    sink_15_5=(6.7918, 1.8384),
    sink_tol=1e-2,
    traj_every=10,
)
def _fig4_phase(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    pl = _plotting()
    th = scan_thresholds(p, (0.0, s["V_max"]), s["grid"], s["bisect_tol"], r, T=s["T"], cfg=ctx.cfg)
    ctx.write_csv("thresholds.csv", ["name", "V"], [(k, v) for k, v in th.as_dict().items() if k in ("V0", "V1", "V1_prime", "V2")])
    ctx.write_csv("fixed_point_counts.csv", ["V", "n_fixed_points"], th.counts)
    ctx.write_csv("folds.csv", ["V", "count_below", "count_above"], th.folds)
    ctx.metric("thresholds", th.as_dict())

    ctx.check_close("V0 (saddle/spiral-source nucleation)", th.V0, s["V0_expected"], s["V0_tol"])
    ctx.check_close("V1' (sink-saddle annihilation)", th.V1_prime, s["V1p_expected"], s["V1p_tol"])
    v1a = analytic_v1prime(p, r)
    ctx.metric("V1_prime_analytic", v1a)
    ctx.check_close("V1' numeric vs normal-regime formula", th.V1_prime, v1a, s["V1p_analytic_tol"])
    ctx.check_between("V2 (cycle cut off)", th.V2, *s["V2_bracket"])
    ctx.check_between("V1 (cycle onset) in expected bracket", th.V1, *s["V1_bracket"],
                      note="cycle onset from (6.6, 2.0207) found by bisection")
    ctx.check("V1 below the regime-I example voltage", th.V1, f"< {s['V1_regime_I']}", "strict",
              th.V1 < s["V1_regime_I"], note="sustained spiking is observed at that voltage")
    ctx.check("ordering V0 < V1 < V1' < V2", [th.V0, th.V1, th.V1_prime, th.V2], "increasing", "strict",
              th.V0 < th.V1 < th.V1_prime < th.V2)

    Vb = s["V_bistable"]
    from_origin = detect_limit_cycle(p, Vb, ORIGIN, s["T"], r, ctx.cfg)
    from_cycle = detect_limit_cycle(p, Vb, LIMIT_CYCLE_INIT, s["T"], r, ctx.cfg)
    ctx.check(f"V={Vb:g}: bistable (origin -> sink, near-cycle start -> cycle)",
              {"origin": from_origin is not None, "near_cycle": from_cycle is not None},
              {"origin": False, "near_cycle": True}, "exact", from_origin is None and from_cycle is not None)

    for V in s["V_portraits"]:
        pp = phase_portrait(p, V, n_edge=s["n_edge"], t_evolve=s["t_evolve"], r=r, cfg=ctx.cfg)
        tag = f"V{V:g}"
        ctx.write_csv(f"portrait_{tag}_field.csv", ["x", "q", "u", "w"],
                      zip(pp.X.ravel(), pp.Q.ravel(), pp.U.ravel(), pp.W.ravel()))
        rows = []
        for i, t in enumerate(pp.trajectories):
            k = s["traj_every"]
            rows += [(i, tt, xx, qq) for tt, xx, qq in zip(t.t[::k], t.x[::k], t.q[::k])]
        ctx.write_csv(f"portrait_{tag}_trajectories.csv", ["traj", "t", "x", "q"], rows)
        ctx.write_csv(f"portrait_{tag}_fixed_points.csv", ["x", "q", "det", "Tr", "Delta", "Type"],
                      [(f.x, f.q, f.det, f.tr, f.delta, f.kind.value) for f in pp.fixed_points])
        ctx.figure(f"portrait_{tag}", pl.plot_portrait, pp)
        kinds = [t.terminal for t in pp.trajectories]
        counts = {k: kinds.count(k) for k in sorted(set(kinds))}
        ctx.metric(f"portrait_{tag}_terminals", counts)
        if V == Vb:
            ctx.check(f"V={V:g}: trajectories split between sink and cycle", counts, "both sink and cycle", "n/a",
                      counts.get("sink", 0) > 0 and counts.get("cycle", 0) > 0)
        elif V == 15.5:
            sx, sq = s["sink_15_5"]
            dist = max(math.hypot(t.x[-1] - sx, t.q[-1] - sq) for t in pp.trajectories if t.ok)
            ctx.check(f"V={V:g}: all trajectories end at the sink", dist, 0.0, s["sink_tol"],
                      dist < s["sink_tol"] and all(t.ok for t in pp.trajectories))
        else:
            ctx.check(f"V={V:g}: all trajectories reach the cycle", counts, "all cycle", "n/a",
                      counts.get("cycle", 0) == len(kinds))
    ctx.figure("fixed_point_counts", pl.plot_curve, [c[0] for c in th.counts], [c[1] for c in th.counts],
               xlabel="V", ylabel="number of fixed points", marker=".")


def _spiking_window(p, r, T, cfg, Vs):
    """Limit-cycle frequency on a voltage grid (NaN where there is none)."""
    omegas = []
    for V in Vs:
        lc = detect_limit_cycle(p, float(V), LIMIT_CYCLE_INIT, T, r, cfg)
        omegas.append(lc.omega if lc else float("nan"))
    omegas = np.array(omegas)
    spiking = np.flatnonzero(np.isfinite(omegas))
    return omegas, spiking


@_register(
    "fig4-frequency-scan",
    "natural spike frequency across the spiking window",
    "Natural frequency omega(V) from the near-cycle start, T=1.5",
    V_lo=6.9,
    V_hi=15.2,
    dV=0.1,
    T=1.5,
    bisect_tol=1e-3,
    edge_offsets=(0.05, 0.02, 0.01, 0.005, 0.002),
    edge_ratio_max=0.25,
    V_left=7.9674,
    V_mid=11.5470,
)
def _fig4_freq(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    Vs = np.round(np.arange(s["V_lo"], s["V_hi"] + 0.5 * s["dV"], s["dV"]), 10)
    omegas, idx = _spiking_window(p, r, s["T"], ctx.cfg, Vs)
    if idx.size < 5:
        ctx.check("spiking window found", int(idx.size), ">= 5 grid points", "n/a", False)
        return
    i0, i1 = idx[0], idx[-1]
    contiguous = bool(np.all(np.isfinite(omegas[i0 : i1 + 1])))

    def has_cycle(V):
        return detect_limit_cycle(p, V, LIMIT_CYCLE_INIT, s["T"], r, ctx.cfg) is not None

    V1 = _bisect(has_cycle, Vs[i0 - 1], Vs[i0], s["bisect_tol"]) if i0 > 0 else float("nan")
    V2 = _bisect(has_cycle, Vs[i1], Vs[i1 + 1], s["bisect_tol"]) if i1 < len(Vs) - 1 else float("nan")
    ctx.metric("V1_edge", V1)
    ctx.metric("V2_edge", V2)

    def omega_at(V):
        lc = detect_limit_cycle(p, V, LIMIT_CYCLE_INIT, s["T"], r, ctx.cfg)
        return lc.omega if lc else float("nan")

    left = [(V1 + d, omega_at(V1 + d)) for d in s["edge_offsets"]]
    right = [(V2 - d, omega_at(V2 - d)) for d in s["edge_offsets"]]
    pts = sorted([(float(V), float(w)) for V, w in zip(Vs, omegas) if math.isfinite(w)] + left + right)
    pts = [pt for pt in pts if math.isfinite(pt[1])]
    ctx.write_csv("omega_natural.csv", ["V", "omega_natural"], pts)
    ctx.figure("omega_natural", _plotting().plot_curve, [a for a, _ in pts], [b for _, b in pts],
               xlabel="V", ylabel="omega_natural", marker=".")

    V_arr = np.array([a for a, _ in pts])
    w_arr = np.array([b for _, b in pts])
    k = int(np.argmax(w_arr))
    d = np.diff(w_arr)
    unimodal = bool(np.all(d[:k] > 0) and np.all(d[k:] < 0))
    ctx.metric("omega_max", float(w_arr[k]))
    ctx.metric("V_at_omega_max", float(V_arr[k]))
    ctx.check("spiking window contiguous on the grid", contiguous, True, "exact", contiguous)
    ctx.check("omega(V) unimodal", unimodal, True, "exact", unimodal, note=f"peak at V={V_arr[k]:.4g}")
    lratio = left[-1][1] / w_arr[k]
    rratio = right[-1][1] / w_arr[k]
    ctx.check("omega -> 0 at the lower edge", lratio, 0.0, s["edge_ratio_max"],
              math.isfinite(lratio) and lratio < s["edge_ratio_max"],
              note=f"omega/omega_max at V1+{s['edge_offsets'][-1]:g}")
    ctx.check("omega -> 0 at the upper edge", rratio, 0.0, s["edge_ratio_max"],
              math.isfinite(rratio) and rratio < s["edge_ratio_max"],
              note=f"omega/omega_max at V2-{s['edge_offsets'][-1]:g}")
    wl, wm = omega_at(s["V_left"]), omega_at(s["V_mid"])
    ctx.check(f"omega({s['V_left']:g}) < omega({s['V_mid']:g})", [wl, wm], "increasing", "strict", wl < wm)


@_register(
    "fig4-spectrum-scan",
    "single-sided spectrum of V_C across the spiking window",
    "P1(omega; V) surface of steady-state V_C",
    V_lo=7.0,
    V_hi=15.1,
    dV=0.2,
    T=1.5,
    omega_max=1.2e5,
    n_bins=600,
    V_harmonic=11.5470,
    rel_height=0.05,
    tol_bins=2.0,
)
def _fig4_spectrum(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    Vs = np.round(np.arange(s["V_lo"], s["V_hi"] + 0.5 * s["dV"], s["dV"]), 10)
    if not np.any(np.isclose(Vs, s["V_harmonic"])):
        Vs = np.sort(np.append(Vs, s["V_harmonic"]))
    edges = np.linspace(0.0, s["omega_max"], s["n_bins"] + 1)
    surface, rows, worst = [], [], 0.0
    n_cycle = 0
    for V in Vs:
        tr = simulate_circuit(p, DC(float(V)), FixedResistor(r), LIMIT_CYCLE_INIT, s["T"], ctx.cfg, t_from=s["T"] / 3)
        spec = single_sided_spectrum(tr.V_C, tr.dt)
        b = np.digitize(spec.omega, edges) - 1
        ok = (b >= 0) & (b < s["n_bins"])
        binned = np.zeros(s["n_bins"])
        np.maximum.at(binned, b[ok], spec.P1[ok])
        surface.append(binned)
        lc = detect_limit_cycle(p, float(V), trace=tr)
        if lc is None:
            rows.append((V, float("nan"), float("nan"), float("nan")))
            continue
        n_cycle += 1
        hann = single_sided_spectrum(tr.V_C, tr.dt, window="hann")
        w, _ = spectral_peaks(hann, s["rel_height"])
        fund = float(w.min())
        err = abs(fund - lc.omega) / spec.d_omega
        worst = max(worst, err)
        rows.append((V, lc.omega, fund, err))
        if math.isclose(V, s["V_harmonic"]):
            harm = w / lc.omega
            off = np.abs(harm - np.round(harm)) * lc.omega / hann.d_omega
            ctx.metric("harmonic_peaks", [[float(a), float(b)] for a, b in zip(w, harm)])
            ctx.check(f"V={V:g}: every significant peak at an integer multiple of omega_natural",
                      float(off.max()), 0.0, f"{s['tol_bins']:g} bins", bool(np.all(off <= s["tol_bins"])),
                      note=f"{len(w)} peaks")
    ctx.write_csv("fundamental.csv", ["V", "omega_poincare", "omega_fundamental_peak", "error_bins"], rows)
    header = ["V"] + [f"{0.5 * (a + b):.6g}" for a, b in zip(edges[:-1], edges[1:])]
    ctx.write_csv("spectrum_surface.csv", header, [[V, *row] for V, row in zip(Vs, surface)])
    centres = 0.5 * (edges[:-1] + edges[1:])
    ctx.figure("spectrum_surface", _plotting().plot_surface, Vs, centres, np.array(surface))
    ctx.check("fundamental peak matches 2*pi/period within one bin", worst, 0.0, "1 bin",
              n_cycle > 0 and worst <= 1.0, note=f"{n_cycle} voltages with a cycle")


# -- fig5 -----------------------------------------------------------------------


@_register(
    "fig5-sync",
    "synchronisation with an added AC drive",
    "Sync sweeps over the source frequency at three DC levels",
    V_dc=(7.0645, 11.5470, 15.0688),
    delta_V=0.1155,
    f_lo=0.2,
    f_hi=3.0,
    n_freq=29,
    T=2.0,
    dt_out=1e-5,
    lock_step=0.02,
    lock_tol=2e-3,
    V_harmonic=7.0645,
    V_low_spiking=15.0688,
    V_narrow=11.5470,
    narrow_width=0.1,
)
def _fig5(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    kw = dict(T=s["T"], r=r, dt_out=s["dt_out"], cfg=ctx.cfg)
    rows, map_rows, widths = [], [], {}
    unmatched = {}
    lowest = {}
    for V in s["V_dc"]:
        wn = natural_frequency_dc(p, V, r=r, cfg=ctx.cfg)
        ctx.metric(f"omega_natural_V{V:g}", wn)
        miss = []
        for f in np.linspace(s["f_lo"], s["f_hi"], s["n_freq"]):
            rep = sync_analysis(p, V, s["delta_V"], float(f) * wn, omega_natural=wn, **kw)
            best = rep.best or (None, None)
            rows.append((V, rep.omega_source, rep.locked, rep.response_class.value, rep.dominant_omega, best[0], best[1],
                         rep.spike_omega, rep.lock_ratio or "", len(rep.peaks), len(rep.unmatched), rep.n_unmatched_dc))
            map_rows.append((V, float(f), rep.response_class.value))
            if not rep.locked and rep.response_class.value != "Harmonic":
                miss.append((float(f), len(rep.unmatched)))
            if f == s["f_lo"]:
                lowest[V] = rep.response_class.value
        unmatched[V] = miss
        lo, hi = lock_interval(p, V, s["delta_V"], wn, step=s["lock_step"], tol=s["lock_tol"], **kw)
        widths[V] = hi - lo
        ctx.metric(f"lock_interval_V{V:g}", [lo, hi])
    ctx.write_csv("sync_scan.csv", ["V_dc", "omega_source", "locked", "response_class", "dominant_omega", "best_N", "best_M",
                                    "spike_omega", "lock_ratio", "n_peaks", "n_unmatched", "n_unmatched_dc"], rows)
    ctx.write_csv("lock_widths.csv", ["V_dc", "relative_width"], sorted(widths.items()))
    ctx.figure("sync_map", _plotting().plot_sync_map, map_rows)

    Vn = s["V_narrow"]
    lo, hi = ctx.report.metrics[f"lock_interval_V{Vn:g}"]
    ctx.check(f"V_dc={Vn:g}: 1:1 lock at omega_source = omega_natural", [lo, hi], "interval containing 1", "n/a",
              lo <= 1.0 <= hi)
    ctx.check(f"V_dc={Vn:g}: narrow lock band", widths[Vn], f"< {s['narrow_width']}", "relative to omega_natural",
              widths[Vn] < s["narrow_width"])
    bad = [m for m in unmatched[Vn] if m[1] > 0]
    ctx.check(f"V_dc={Vn:g}: unlocked spectra on the N*omega_nat +- M*omega_src lattice", len(bad), 0,
              "2 bins, N, M <= 5", not bad and len(unmatched[Vn]) > 0,
              note=f"{len(unmatched[Vn])} unlocked sweep points")
    for V in s["V_dc"]:
        if V != Vn:
            ctx.check(f"lock width at V_dc={V:g} exceeds that at {Vn:g}", [widths[V], widths[Vn]], "greater", "strict",
                      widths[V] > widths[Vn])
    ctx.check(f"V_dc={s['V_harmonic']:g}: low-frequency response", lowest.get(s["V_harmonic"]), "Harmonic", "exact",
              lowest.get(s["V_harmonic"]) == "Harmonic")
    ctx.check(f"V_dc={s['V_low_spiking']:g}: low-frequency response", lowest.get(s["V_low_spiking"]),
              "SpikeTrainLowFreq", "exact", lowest.get(s["V_low_spiking"]) == "SpikeTrainLowFreq")


# -- fig6 -----------------------------------------------------------------------


def _bursting(ctx: _Context, series, V):
    p, s = ctx.p, ctx.s
    tr = simulate_circuit(p, DC(V), series, ORIGIN, s["T"], ctx.cfg, s["dt_out"])
    ctx.write_trace("trace.csv", tr.decimate(s["csv_dt"]))
    ctx.figure("trace", _plotting().plot_trace, tr.decimate(s["csv_dt"]), signals=("x", "V_C", "I_r", "r_series"), x_c=p.x_c)
    train = detect_spikes(tr, p)
    bursts = segment_bursts(train, s["gap_factor"], s["min_spikes"])
    ctx.write_csv("bursts.csv", ["start", "stop", "n_spikes", "mean_interval", "cv"],
                  [(b.start, b.stop, b.n_spikes, b.mean_interval, b.cv) for b in bursts])
    ctx.metric("n_spikes", len(train))
    ctx.metric("r_range", [float(tr.r_series.min()), float(tr.r_series.max())])
    ctx.check("bursts (>= min_spikes each)", len(bursts), f">= {s['min_bursts']}", "count", len(bursts) >= s["min_bursts"],
              note=f"gap factor {s['gap_factor']:g} x median interval")
    # the burst fired from the initial state is a start-up transient
    if s["skip_first"] and bursts and bursts[0].start < bursts[0].mean_interval * s["gap_factor"]:
        bursts = bursts[1:]
    if bursts:
        cvs = [b.cv for b in bursts]
        ctx.check("intra-burst inter-spike CV (median over bursts)", float(np.median(cvs)), 0.0, s["cv_max"],
                  float(np.median(cvs)) < s["cv_max"], note="start-up burst excluded" if s["skip_first"] else "")
    if len(bursts) > 1:
        ratios = [(b2.start - b1.stop) / b1.mean_interval for b1, b2 in zip(bursts, bursts[1:])]
        ctx.check("quiescent gap / intra-burst interval (minimum)", float(min(ratios)), f">= {s['gap_factor']}", "ratio",
                  min(ratios) >= s["gap_factor"])
    ctx.check("series resistance stays >= r_min", float(tr.r_series.min()), f">= {series.r_min}", "bound",
              float(tr.r_series.min()) >= series.r_min)
    return tr


@_register(
    "fig6-bursting-kernel",
    "bursting with a memory-kernel memristor in series",
    "Kernel memristor in series: bursts separated by quiescent gaps",
    V=13.8564,
    alpha1=3.4641e-6,
    lambda1=1.6e5,
    gamma_kernel=0.0,
    r0=1e-3,
    r_min=0.8e-3,
    T=0.2,
    dt_out=1e-6,
    csv_dt=1e-5,
    gap_factor=5.0,
    min_spikes=3,
    min_bursts=3,
    cv_max=0.1,
    skip_first=True,
)
def _fig6_kernel(ctx: _Context):
    s = ctx.s
    ser = KernelMemristor(s["alpha1"], s["lambda1"], s["gamma_kernel"], s["r0"], s["r_min"], s["r0"])
    _bursting(ctx, ser, s["V"])


@_register(
    "fig6-bursting-threshold",
    "bursting with a current-threshold memristor in series",
    "Threshold memristor in series (smoothed step)",
    V=7.9674,
    I_thresh=10.3923,
    lambda_prime=1000.0,
    alpha2=1.6e4,
    lambda2=2000.0,
    r0=1e-3,
    r_min=0.8e-3,
    T=0.5,
    dt_out=1e-6,
    csv_dt=1e-5,
    gap_factor=5.0,
    min_spikes=3,
    min_bursts=3,
    cv_max=0.1,
    skip_first=True,
    plateau_rel=0.01,
)
def _fig6_threshold(ctx: _Context):
    s = ctx.s
    ser = ThresholdMemristor(s["alpha2"], s["lambda2"], s["I_thresh"], s["lambda_prime"], s["r_min"], s["r0"])
    tr = _bursting(ctx, ser, s["V"])
    # time spent with I_r pinned at the threshold (sliding on I_r = I')
    pinned = np.abs(tr.I_r - s["I_thresh"]) < s["plateau_rel"] * s["I_thresh"]
    ctx.metric("fraction_pinned_at_threshold", float(pinned.mean()))


# -- appendix experiments ---------------------------------------------------------


@_register(
    "figA7-switching",
    "pulse switching between the sink and the limit cycle",
    "Voltage pulses toggle between static and spiking states at fixed V_dc",
    V_dc=7.5,
    V_high=8.5,
    V_low=6.5,
    pulse=0.1,
    t_pre=0.3,
    t_mid=0.5,
    t_post=0.5,
    settle=0.05,
    dt_out=1e-6,
    csv_dt=1e-5,
    min_spikes=5,
)
def _figA7(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    segs = [(s["t_pre"], s["V_dc"]), (s["pulse"], s["V_high"]), (s["t_mid"], s["V_dc"]), (s["pulse"], s["V_low"]),
            (s["t_post"], s["V_dc"])]
    T = sum(d for d, _ in segs)
    tr = simulate_circuit(p, PiecewiseDC(segs), FixedResistor(r), ORIGIN, T, ctx.cfg, s["dt_out"])
    ctx.write_trace("trace.csv", tr.decimate(s["csv_dt"]))
    ctx.figure("trace", _plotting().plot_trace, tr.decimate(s["csv_dt"]), signals=("V_drive", "x", "V_C"), x_c=p.x_c)
    times = detect_spikes(tr, p).times
    b = np.cumsum([0.0] + [d for d, _ in segs])

    def count(t0, t1):
        return int(np.sum((times >= t0) & (times < t1)))

    pre = count(0.0, b[1])
    mid_late = count(b[2] + 0.5 * s["t_mid"], b[3])
    post = count(b[4] + s["settle"], b[5])
    ctx.metric("spikes_per_segment", [count(a, c) for a, c in zip(b[:-1], b[1:])])
    ctx.check("before the pulses: static", pre, 0, "exact", pre == 0)
    ctx.check("after the high pulse: sustained spiking at V_dc", mid_late, f">= {s['min_spikes']}",
              "count in second half of segment", mid_late >= s["min_spikes"])
    ctx.check("after the low pulse: spiking ceased", post, 0, "exact", post == 0, note=f"after {s['settle']:g} settling")
    v1a = analytic_v1prime(p, r)
    ctx.check("high pulse above V1'", s["V_high"], f"> {v1a:.5g}", "strict", s["V_high"] > v1a)


def match_table(p: ModelParams, rows, r: float = TABLE1_R):
    """Match each reference row to the nearest computed fixed point at its voltage.

    Returns a list of ``(row, fixed_point_or_None, distance)``.
    """
    cache = {}
    out = []
    for row in rows:
        V = row[0]
        if V not in cache:
            cache[V] = find_fixed_points(p, V, r=r, extra_seeds=[[rw[1], rw[2]] for rw in rows if rw[0] == V])
        fps = cache[V]
        if not fps:
            out.append((row, None, float("inf")))
            continue
        f = min(fps, key=lambda f: math.hypot(f.x - row[1], f.q - row[2]))
        out.append((row, f, math.hypot(f.x - row[1], f.q - row[2])))
    return out, cache


def _row_ok(row, f, coord_tol, rel_tol, delta_tol):
    if f is None:
        return False, {}
    V, x, q, det, tr, delta, kind = row
    err = {
        "x": abs(f.x - x),
        "q": abs(f.q - q),
        "det_rel": abs(f.det - det) / abs(det),
        "tr_rel": abs(f.tr - tr) / abs(tr),
        "delta_rel": abs(f.delta - delta) / abs(delta),
    }
    ok = (err["x"] <= coord_tol and err["q"] <= coord_tol and err["det_rel"] <= rel_tol and err["tr_rel"] <= rel_tol
          and err["delta_rel"] <= delta_tol and f.kind == kind)
    return ok, err


def _table(ctx: _Context, kind, rows):
    s = ctx.s
    p = ModelParams(**{**asdict(ctx.p), "memristance": kind})
    ctx.report.params["memristance"] = kind
    matched, by_V = match_table(p, rows, ctx.r)
    out = []
    for i, (row, f, dist) in enumerate(matched):
        ok, err = _row_ok(row, f, s["coord_tol"], s["rel_tol"], s["delta_tol"])
        meas = None if f is None else {"x": f.x, "q": f.q, "det": f.det, "tr": f.tr, "delta": f.delta, "kind": f.kind.value}
        exp = dict(zip(("x", "q", "det", "tr", "delta"), row[1:6]), kind=row[6].value)
        ctx.check(f"row {i + 1}: V={row[0]:g} {row[6].value}", meas, exp,
                  {"coord": s["coord_tol"], "det_tr_rel": s["rel_tol"], "delta_rel": s["delta_tol"]}, ok,
                  note=", ".join(f"{k}={v:.2e}" for k, v in err.items()))
        if f is not None:
            out.append((row[0], f.x, f.q, f.det, f.tr, f.delta, f.kind.value))
    extra = {V: len(fps) - sum(1 for rw in rows if rw[0] == V) for V, fps in by_V.items()}
    ctx.metric("unlisted_fixed_points_per_V", extra)
    ctx.write_csv("fixed_points.csv", ["V", "x", "q", "det", "Tr", "Delta", "Type"], out)
    ctx.write_csv("reference.csv", ["V", "x", "q", "det", "Tr", "Delta", "Type"], [(*rw[:6], rw[6].value) for rw in rows])
    return p


_TABLE_SETTINGS = dict(coord_tol=1e-3, rel_tol=5e-3, delta_tol=1e-2)


@_register(
    "tableA1-jacobians",
    "fixed points and Jacobian scalars, type I memristance",
    "Regenerate the type I fixed-point/Jacobian table",
    **_TABLE_SETTINGS,
)
def _tableA1(ctx: _Context):
    _table(ctx, TYPE_I, TYPE_I_ROWS)


@_register(
    "tableA2-jacobians",
    "fixed points and Jacobian scalars, type II memristance",
    "Regenerate the type II fixed-point/Jacobian table and report the type II fold",
    reference_V1p_type2=7.1053,
    **_TABLE_SETTINGS,
)
def _tableA2(ctx: _Context):
    p = _table(ctx, TYPE_II, TYPE_II_ROWS)
    folds, _ = fixed_point_folds(p, (0.0, 18.0), 0.05, 1e-4, ctx.r)
    ctx.metric("type2_folds", [list(f) for f in folds])
    down = [f[0] for f in folds if f[1] > f[2]]
    ctx.metric("type2_V1_prime_numeric", down[0] if down else None)
    ctx.metric("type2_V1_prime_formula_10rho0", analytic_v1prime(p, ctx.r))
    ctx.metric("type2_V1_prime_formula_rho0", analytic_v1prime(p, ctx.r, rho0_eff=p.rho0))
    ctx.metric("type2_V1_prime_reference", ctx.s["reference_V1p_type2"])


@_register(
    "figA9-locking",
    "locked drive/response waveforms in the three spiking regimes",
    "V_C against the AC drive at rational locking ratios",
    V_dc=(7.0645, 11.5470, 15.0688),
    delta_V=0.1155,
    source_ratios=(0.5, 1.0, 1.5, 2.0),
    T=2.0,
    dt_out=1e-5,
    n_periods=4,
)
def _figA9(ctx: _Context):
    p, s, r = ctx.p, ctx.s, ctx.r
    panels = []
    for V in s["V_dc"]:
        wn = natural_frequency_dc(p, V, r=r, cfg=ctx.cfg)
        row = []
        for f in s["source_ratios"]:
            ws = f * wn
            tr = simulate_circuit(p, DCPlusAC(V, s["delta_V"], ws), FixedResistor(r), LIMIT_CYCLE_INIT, s["T"], ctx.cfg,
                                  s["dt_out"], t_from=s["T"] / 4)
            rep = sync_report_from_trace(tr, p, V, s["delta_V"], ws, wn)
            expected = Fraction(1) / Fraction(f).limit_denominator(3)
            ctx.check(f"V_dc={V:g}, omega_source={f:g} omega_nat: spike rate / source = {expected}",
                      str(rep.lock_ratio) if rep.lock_ratio else f"{rep.spike_omega / ws:.4f}", str(expected),
                      "1% on the rate ratio", rep.lock_ratio == expected)
            win = tr.window(tr.t[-1] - s["n_periods"] * 2 * math.pi / ws)
            ctx.write_csv(f"overlay_V{V:g}_f{f:g}.csv", ["t", "V_drive", "V_C"], zip(win.t, win.V_drive, win.V_C))
            row.append((f"V={V:g} ws/wn={f:g} ({rep.lock_ratio or 'unlocked'})", win.t, win.V_drive, win.V_C))
        panels.append(row)
    ctx.figure("overlays", _plotting().plot_overlays, panels)
