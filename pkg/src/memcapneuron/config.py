"""Run configuration: flat ``section.key = value`` text over built-in defaults.

Example::

    # comments start with '#'
    model.memristance = type2
    circuit.r = 1e-3

    [drive]
    V = 8.0829

A ``[section]`` header prefixes the bare keys that follow it. Files ending
in ``.json`` are read as JSON, either flat with dotted keys or nested one
level by section. Every key is checked against :data:`SCHEMA`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .integrator import IntegratorConfig
from .model import (
    DC,
    CircuitState,
    DCPlusAC,
    FixedResistor,
    KernelMemristor,
    ModelParams,
    ParameterError,
    TABLE1_R,
    TYPE_I,
    TYPE_II,
    ThresholdMemristor,
)

__all__ = ["SCHEMA", "ConfigError", "RunConfig", "load_config", "parse_config_text"]

_M = ModelParams()
_I = IntegratorConfig()

# key -> (type, default, allowed values or None)
SCHEMA: dict[str, tuple] = {
    "model.d": (float, _M.d, None),
    "model.x_c": (float, _M.x_c, None),
    "model.beta": (float, _M.beta, None),
    "model.k": (float, _M.k, None),
    "model.rho0": (float, _M.rho0, None),
    "model.gamma_damp": (float, _M.gamma_damp, None),
    "model.memristance": (str, _M.memristance, (TYPE_I, TYPE_II)),
    "model.beta2": (float, _M.beta2, None),
    "model.x_guard": (float, _M.x_guard, None),
    "circuit.r": (float, TABLE1_R, None),
    "series.kind": (str, "fixed", ("fixed", "kernel", "threshold")),
    "series.alpha1": (float, 3.4641e-6, None),
    "series.lambda1": (float, 1.6e5, None),
    "series.gamma_kernel": (float, 0.0, None),
    "series.r0": (float, 1e-3, None),
    "series.r_min": (float, 0.8e-3, None),
    "series.init_r": (float, 1e-3, None),
    "series.alpha2": (float, 1.6e4, None),
    "series.lambda2": (float, 2000.0, None),
    "series.I_thresh": (float, 10.3923, None),
    "series.lambda_prime": (float, 1000.0, None),
    "drive.V": (float, 8.0829, None),
    "drive.delta_V": (float, 0.0, None),
    "drive.omega_source": (float, 0.0, None),
    "init.x": (float, 0.0, None),
    "init.q": (float, 0.0, None),
    "sim.T": (float, 1.5, None),
    "sim.dt_out": (float, 1e-5, None),
    "sim.t_from": (float, 0.0, None),
    "integrator.rtol": (float, _I.rtol, None),
    "integrator.atol": (float, _I.atol, None),
    "integrator.h_init": (float, _I.h_init, None),
    "integrator.h_max": (float, _I.h_max, None),
    "integrator.max_steps": (int, _I.max_steps, None),
    "output.precision": (int, 17, None),
}

# aliases accepted for the memristance kind
_KIND_ALIASES = {"i": TYPE_I, "typei": TYPE_I, "type1": TYPE_I, "ii": TYPE_II, "typeii": TYPE_II, "type2": TYPE_II}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is set for text parse errors."""

    def __init__(self, msg: str, line: int | None = None, source: str | None = None):
        where = ""
        if source or line:
            where = f"{source or '<config>'}" + (f":{line}" if line else "") + ": "
        super().__init__(where + msg)
        self.line = line


def _valid_keys_msg() -> str:
    return "valid keys: " + ", ".join(SCHEMA)


def _convert(key: str, raw, line=None, source=None):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}; {_valid_keys_msg()}", line, source)
    typ, _, allowed = SCHEMA[key]
    try:
        if typ is str:
            val = str(raw).strip()
            if key == "model.memristance":
                val = _KIND_ALIASES.get(val.lower().replace(" ", "").replace("_", ""), val)
        elif typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            val = int(float(raw)) if isinstance(raw, str) and "e" in raw.lower() else int(raw)
        else:
            if isinstance(raw, bool):
                raise ValueError(raw)
            val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}", line, source) from None
    if allowed is not None and val not in allowed:
        raise ConfigError(f"{key}: must be one of {list(allowed)}, got {val!r}", line, source)
    return val


def parse_config_text(text: str, source: str | None = None) -> dict:
    """Parse flat dotted-key text into a ``{key: value}`` dict (not merged)."""
    out: dict = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", n, source)
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", n, source)
        if section and "." not in key:
            key = f"{section}.{key}"
        out[key] = _convert(key, value, n, source)
    return out


def _flatten_json(obj, source=None) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("JSON config must be an object", source=source)
    flat = {}
    for k, v in obj.items():
        if isinstance(v, dict):
            for k2, v2 in v.items():
                flat[f"{k}.{k2}"] = v2
        else:
            flat[k] = v
    return {k: _convert(k, v, source=source) for k, v in flat.items()}


@dataclass
class RunConfig:
    """A complete, validated parameter set."""

    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def updated(self, overrides: dict) -> "RunConfig":
        """Copy with ``overrides`` applied (values converted and validated)."""
        vals = dict(self.values)
        for k, v in overrides.items():
            vals[k] = _convert(k, v)
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def params(self) -> ModelParams:
        return ModelParams(**self.section("model"))

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**self.section("integrator"))

    def series(self, kind: str | None = None):
        """The configured series element (or the one named by ``kind``)."""
        s = self.section("series")
        kind = s.pop("kind") if kind is None else kind
        if kind == "fixed":
            return FixedResistor(self["circuit.r"])
        if kind == "kernel":
            return KernelMemristor(s["alpha1"], s["lambda1"], s["gamma_kernel"], s["r0"], s["r_min"], s["init_r"])
        return ThresholdMemristor(s["alpha2"], s["lambda2"], s["I_thresh"], s["lambda_prime"], s["r_min"], s["init_r"])

    def drive(self):
        d = self.section("drive")
        if d["delta_V"] == 0:
            return DC(d["V"])
        return DCPlusAC(d["V"], d["delta_V"], d["omega_source"])

    def init(self) -> CircuitState:
        return CircuitState(self["init.x"], self["init.q"])

    def validate(self) -> None:
        """Build every parameter object once so invalid values fail early."""
        try:
            self.params()
            self.integrator()
            for kind in SCHEMA["series.kind"][2]:
                self.series(kind)
            self.drive()
        except (ParameterError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        if not self["circuit.r"] > 0:
            raise ConfigError(f"invalid configuration: need circuit.r > 0 (circuit.r={self['circuit.r']})")
        if not (self["sim.T"] > 0 and self["sim.dt_out"] > 0 and 0 <= self["sim.t_from"] < self["sim.T"]):
            raise ConfigError("invalid configuration: need sim.T > 0, sim.dt_out > 0 and 0 <= sim.t_from < sim.T")
        if not 1 <= self["output.precision"] <= 17:
            raise ConfigError("invalid configuration: output.precision must be within 1..17")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a config file and merge it over the defaults.

    ``path=None`` gives the defaults, i.e. the reference simulation setup.
    ``overrides`` (``{dotted key: value}``) are applied last.
    """
    values = {k: v[1] for k, v in SCHEMA.items()}
    if path is not None:
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            try:
                obj = json.loads(text) if text.strip() else {}
            except json.JSONDecodeError as exc:
                raise ConfigError(f"JSON parse error: {exc.msg}", exc.lineno, str(path)) from None
            values.update(_flatten_json(obj, str(path)))
        else:
            values.update(parse_config_text(text, str(path)))
    cfg = RunConfig(values)
    if overrides:
        return cfg.updated(overrides)
    cfg.validate()
    return cfg

