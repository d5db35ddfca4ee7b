"""Command-line interface.

Exit status: 0 success, 1 usage or configuration error, 2 an experiment's
embedded checks failed, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import SCHEMA, ConfigError, RunConfig, load_config
from .experiments import REGISTRY, ExperimentSpec, OverrideError, UnknownExperiment, run_experiment
from .integrator import IntegrationError, format_float, simulate_circuit
from .model import DC, DomainError, FixedResistor, ParameterError
from .phase import BracketNotFound, DegenerateFixedPoint, detect_limit_cycle, find_fixed_points, phase_portrait, scan_thresholds
from .signals import (
    LIMIT_CYCLE_INIT,
    InsufficientSpikes,
    detect_spikes,
    natural_frequency_dc,
    single_sided_spectrum,
    spectral_peaks,
    sync_analysis,
)

log = logging.getLogger("memcapneuron")

OUT_ENV = "MEMCAPNEURON_OUT"

EXIT_OK, EXIT_USAGE, EXIT_CHECKS, EXIT_NUMERIC = 0, 1, 2, 3

# shortcut flag -> config key
_PARAM_FLAGS = {
    "d": "model.d",
    "x_c": "model.x_c",
    "beta": "model.beta",
    "k": "model.k",
    "rho0": "model.rho0",
    "gamma_damp": "model.gamma_damp",
    "memristance": "model.memristance",
    "r": "circuit.r",
    "rtol": "integrator.rtol",
    "atol": "integrator.atol",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    c = _Parser(add_help=False)
    g = c.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="config file (dotted key = value text, or .json)")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    for flag, key in _PARAM_FLAGS.items():
        typ = str if SCHEMA[key][0] is str else float
        g.add_argument(f"--{flag.replace('_', '-')}", dest=f"p_{flag}", type=typ, metavar=flag.upper(), help=f"sets {key}")
    o = c.add_argument_group("output")
    o.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV} or the current directory)")
    o.add_argument("--precision", type=int, help="significant digits of floating output (default 17)")
    o.add_argument("--format", default="csv,json,svg", help="comma list from csv, json, svg, png")
    o.add_argument("-v", "--verbose", action="store_true")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="memcapneuron", description="Leaky memcapacitor spiking neuron toolkit.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="integrate the circuit and write its trace")
    s.add_argument("--V", type=float, help="DC voltage (drive.V)")
    s.add_argument("--T", type=float, help="duration (sim.T)")
    s.add_argument("--dt-out", type=float, help="output sampling step (sim.dt_out)")
    s.add_argument("--x0", type=float, help="initial x (init.x)")
    s.add_argument("--q0", type=float, help="initial q (init.q)")
    s.add_argument("--delta-V", type=float, help="AC amplitude (drive.delta_V)")
    s.add_argument("--omega-source", type=float, help="AC angular frequency (drive.omega_source)")
    s.add_argument("--series", choices=("fixed", "kernel", "threshold"), help="series element (series.kind)")

    f = sub.add_parser("fixed-points", parents=[common], help="fixed points and their Jacobian scalars")
    f.add_argument("--V", type=float, action="append", required=True, help="voltage (repeatable)")

    pp = sub.add_parser("portrait", parents=[common], help="normalised flow field and trajectory bundle")
    pp.add_argument("--V", type=float, required=True)
    pp.add_argument("--n-edge", type=int, default=6)
    pp.add_argument("--t-evolve", type=float, default=0.05)
    pp.add_argument("--n-grid", type=int, default=25)

    th = sub.add_parser("thresholds", parents=[common], help="locate V0, V1, V1', V2")
    th.add_argument("--V-max", type=float, default=18.0)
    th.add_argument("--grid", type=float, default=0.05)
    th.add_argument("--bisect-tol", type=float, default=1e-3)
    th.add_argument("--T", type=float, default=1.5)

    fs = sub.add_parser("freq-scan", parents=[common], help="natural frequency versus DC voltage")
    fs.add_argument("--V-lo", type=float, default=6.9)
    fs.add_argument("--V-hi", type=float, default=15.2)
    fs.add_argument("--dV", type=float, default=0.1)
    fs.add_argument("--T", type=float, default=1.5)

    sp = sub.add_parser("spectrum", parents=[common], help="single-sided spectrum of steady-state V_C")
    sp.add_argument("--V", type=float, required=True)
    sp.add_argument("--T", type=float, default=1.5)
    sp.add_argument("--window", choices=("none", "hann"), default="none")
    sp.add_argument("--omega-max", type=float, default=None, help="truncate the written spectrum")

    sy = sub.add_parser("sync-scan", parents=[common], help="AC-drive response over source frequencies")
    sy.add_argument("--V-dc", type=float, action="append", required=True, help="DC level (repeatable)")
    sy.add_argument("--delta-V", type=float, default=0.1155)
    sy.add_argument("--f-lo", type=float, default=0.2, help="lowest omega_source / omega_natural")
    sy.add_argument("--f-hi", type=float, default=3.0)
    sy.add_argument("--n-freq", type=int, default=15)
    sy.add_argument("--T", type=float, default=2.0)

    ex = sub.add_parser("experiment", parents=[common], help="run a registered experiment")
    ex.add_argument("name")
    ex.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="override an experiment setting")

    sub.add_parser("list-experiments", help="list registered experiments and their settings")
    return ap


# -- helpers ------------------------------------------------------------------


def _kv(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"{what} expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args, extra: dict | None = None) -> RunConfig:
    overrides = _kv(args.set, "--set")
    for flag, key in _PARAM_FLAGS.items():
        val = getattr(args, f"p_{flag}", None)
        if val is not None:
            overrides[key] = val
    overrides.update({k: v for k, v in (extra or {}).items() if v is not None})
    if args.precision is not None:
        overrides["output.precision"] = args.precision
    return load_config(args.config, overrides)


class _Out:
    def __init__(self, args, precision):
        base = args.out or Path(os.environ.get(OUT_ENV, "."))
        base.mkdir(parents=True, exist_ok=True)
        self.dir = base
        self.precision = precision
        self.formats = {f.strip() for f in args.format.split(",") if f.strip()}
        bad = self.formats - {"csv", "json", "svg", "png"}
        if bad:
            raise UsageError(f"unknown output format(s) {sorted(bad)}")
        self.written = []

    def fmt(self, v):
        if isinstance(v, (float, np.floating)):
            return format_float(v, self.precision)
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v))
        return str(v)

    def csv(self, name, header, rows):
        if "csv" not in self.formats:
            return
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([self.fmt(v) for v in row])
        self.written.append(path)

    def json(self, name, obj):
        if "json" not in self.formats:
            return
        path = self.dir / name
        path.write_text(json.dumps(obj, indent=2, default=float) + "\n")
        self.written.append(path)

    def figure(self, stem, plot, *a, **kw):
        for ext in ("svg", "png"):
            if ext in self.formats:
                path = self.dir / f"{stem}.{ext}"
                plot(*a, path=path, **kw)
                self.written.append(path)

    def done(self):
        for p in self.written:
            print(f"wrote {p}")


def _plotting():
    from . import plotting

    return plotting


def _table_rows(fps):
    return [(f.V, f.x, f.q, f.det, f.tr, f.delta, f.kind.value) for f in fps]


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(args):
    cfg = _config(args, {
        "drive.V": args.V, "sim.T": args.T, "sim.dt_out": args.dt_out, "init.x": args.x0, "init.q": args.q0,
        "drive.delta_V": args.delta_V, "drive.omega_source": args.omega_source, "series.kind": args.series,
    })
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    trace = simulate_circuit(p, cfg.drive(), cfg.series(), cfg.init(), cfg["sim.T"], cfg.integrator(), cfg["sim.dt_out"],
                             cfg["sim.t_from"])
    if "csv" in out.formats:
        path = out.dir / "trace.csv"
        trace.to_csv(path, precision=out.precision)
        out.written.append(path)
    train = detect_spikes(trace, p)
    summary = {"n_samples": len(trace), "n_spikes": len(train), "config": cfg.values}
    if len(train) > 2:
        summary["spike_omega"] = 2 * math.pi * train.rate()
    out.json("summary.json", summary)
    out.figure("trace", _plotting().plot_trace, trace, x_c=p.x_c, signals=("x", "V_C", "I_r", "r_series"))
    print(f"{len(trace)} samples, {len(train)} spikes")
    out.done()
    return EXIT_OK


def cmd_fixed_points(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    fps = []
    for V in args.V:
        fps += find_fixed_points(p, V, r=cfg["circuit.r"])
    header = ["V", "x", "q", "det", "Tr", "Delta", "Type"]
    rows = _table_rows(fps)
    out.csv("fixed_points.csv", header, rows)
    w = min(out.precision, 8)
    for row in rows:
        print("  ".join(f"{v:.{w}g}" if isinstance(v, float) else str(v) for v in row))
    out.done()
    return EXIT_OK


def cmd_portrait(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    pp = phase_portrait(p, args.V, n_edge=args.n_edge, t_evolve=args.t_evolve, n_grid=args.n_grid, r=cfg["circuit.r"],
                        cfg=cfg.integrator())
    out.csv("field.csv", ["x", "q", "u", "w"], zip(pp.X.ravel(), pp.Q.ravel(), pp.U.ravel(), pp.W.ravel()))
    rows = []
    for i, t in enumerate(pp.trajectories):
        rows += [(i, a, b, c) for a, b, c in zip(t.t[::10], t.x[::10], t.q[::10])]
    out.csv("trajectories.csv", ["traj", "t", "x", "q"], rows)
    out.csv("trajectory_summary.csv", ["traj", "x0", "q0", "ok", "terminal", "error"],
            [(i, t.init[0], t.init[1], t.ok, t.terminal, t.error) for i, t in enumerate(pp.trajectories)])
    out.csv("fixed_points.csv", ["V", "x", "q", "det", "Tr", "Delta", "Type"], _table_rows(pp.fixed_points))
    out.figure("portrait", _plotting().plot_portrait, pp)
    failed = sum(not t.ok for t in pp.trajectories)
    print(f"{len(pp.trajectories)} trajectories ({failed} failed), {len(pp.fixed_points)} fixed points")
    out.done()
    return EXIT_OK


def cmd_thresholds(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    th = scan_thresholds(cfg.params(), (0.0, args.V_max), args.grid, args.bisect_tol, cfg["circuit.r"], T=args.T,
                         cfg=cfg.integrator())
    d = th.as_dict()
    out.csv("thresholds.csv", ["name", "V"], [(k, d[k]) for k in ("V0", "V1", "V1_prime", "V2")])
    out.json("thresholds.json", d)
    for k in ("V0", "V1", "V1_prime", "V2"):
        print(f"{k:9s} {d[k]:.{min(out.precision, 8)}g}")
    out.done()
    return EXIT_OK


def cmd_freq_scan(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    rows = []
    for V in np.round(np.arange(args.V_lo, args.V_hi + 0.5 * args.dV, args.dV), 10):
        lc = detect_limit_cycle(p, float(V), LIMIT_CYCLE_INIT, args.T, cfg["circuit.r"], cfg.integrator())
        rows.append((float(V), lc.omega if lc else float("nan"), lc.period if lc else float("nan")))
        print(f"V={V:.4f} omega={rows[-1][1]:.6g}")
    out.csv("omega_natural.csv", ["V", "omega_natural", "period"], rows)
    ok = [r for r in rows if math.isfinite(r[1])]
    if ok:
        out.figure("omega_natural", _plotting().plot_curve, [r[0] for r in ok], [r[1] for r in ok], xlabel="V",
                   ylabel="omega_natural")
    out.done()
    return EXIT_OK


def cmd_spectrum(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    tr = simulate_circuit(p, DC(args.V), FixedResistor(cfg["circuit.r"]), LIMIT_CYCLE_INIT, args.T, cfg.integrator(),
                          cfg["sim.dt_out"], t_from=args.T / 3)
    spec = single_sided_spectrum(tr.V_C, tr.dt, window=None if args.window == "none" else args.window)
    sel = slice(None) if args.omega_max is None else spec.omega <= args.omega_max
    out.csv("spectrum.csv", ["omega", "P1"], zip(spec.omega[sel], spec.P1[sel]))
    w, a = spectral_peaks(spec)
    out.csv("peaks.csv", ["omega", "P1"], zip(w, a))
    out.json("spectrum_summary.json", {"V": args.V, "mean_V_C": spec.mean, "d_omega": spec.d_omega, "n": spec.n,
                                       "peaks": [[float(x), float(y)] for x, y in zip(w, a)]})
    out.figure("spectrum", _plotting().plot_curve, spec.omega[sel], spec.P1[sel], xlabel="omega", ylabel="P1", marker="")
    print(f"{len(w)} significant peaks; strongest at omega={w[0]:.6g}" if len(w) else "no significant peaks")
    out.done()
    return EXIT_OK


def cmd_sync_scan(args):
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    p = cfg.params()
    r = cfg["circuit.r"]
    rows, map_rows = [], []
    for V in args.V_dc:
        wn = natural_frequency_dc(p, V, r=r, cfg=cfg.integrator())
        for f in np.linspace(args.f_lo, args.f_hi, args.n_freq):
            rep = sync_analysis(p, V, args.delta_V, float(f) * wn, T=args.T, omega_natural=wn, r=r,
                                dt_out=cfg["sim.dt_out"], cfg=cfg.integrator())
            N, M = rep.best or ("", "")
            rows.append((V, rep.omega_source, rep.locked, rep.response_class.value, rep.dominant_omega, N, M))
            map_rows.append((V, float(f), rep.response_class.value))
            print(f"V_dc={V:g} omega_source={rep.omega_source:.6g} {rep.response_class.value}"
                  + (f" ({rep.lock_ratio})" if rep.locked else ""))
    out.csv("sync_scan.csv", ["V_dc", "omega_source", "locked", "response_class", "dominant_omega", "best_N", "best_M"], rows)
    out.figure("sync_map", _plotting().plot_sync_map, map_rows)
    out.done()
    return EXIT_OK


def cmd_experiment(args):
    if args.name not in REGISTRY:
        raise UnknownExperiment(args.name)
    cfg = _config(args)
    out = _Out(args, cfg["output.precision"])
    spec = ExperimentSpec(args.name, cfg.params(), _kv(args.param, "--param"), out.dir, cfg.integrator(), cfg["circuit.r"],
                          out.precision, tuple(sorted(out.formats)))
    rep = run_experiment(spec)
    for c in rep.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: measured={_short(c.measured)} expected={_short(c.expected)}")
    print(f"{rep.name}: {sum(c.passed for c in rep.checks)}/{len(rep.checks)} checks passed; "
          f"artifacts in {out.dir / rep.name}")
    return EXIT_OK if rep.passed else EXIT_CHECKS


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    s = str(v)
    return s if len(s) < 80 else s[:77] + "..."


def cmd_list(args):
    for e in REGISTRY.values():
        print(f"{e.name:26s} {e.description}")
        print("    settings: " + ", ".join(f"{k}={v}" for k, v in e.settings.items()))
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fixed-points": cmd_fixed_points,
    "portrait": cmd_portrait,
    "thresholds": cmd_thresholds,
    "freq-scan": cmd_freq_scan,
    "spectrum": cmd_spectrum,
    "sync-scan": cmd_sync_scan,
    "experiment": cmd_experiment,
    "list-experiments": cmd_list,
}


def main(argv=None) -> int:
    """Parse ``argv``, dispatch the subcommand and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.cmd](args)
    except (DomainError, IntegrationError, BracketNotFound, InsufficientSpikes, DegenerateFixedPoint,
            FloatingPointError) as exc:
        print(f"numerical failure in {args.cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, OverrideError, UnknownExperiment, ParameterError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        if isinstance(exc, (ConfigError, ParameterError)):
            print("valid config keys: " + ", ".join(SCHEMA), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
