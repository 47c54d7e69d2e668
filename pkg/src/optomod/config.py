"""Run configuration: YAML ingestion, validation, presets and sweep paths.

A configuration names either a physical system (``system`` + ``drive``) or
a synthetic drift (``synthetic``) that supplies the harmonics of ``G(t)``
and ``Delta(t)`` directly. Complex numbers are written as ``[re, im]``.
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, OptomodError
from .params import SystemParams, system_from_mapping

MODES = ("time_domain", "spectral", "both")
DETUNING_REFS = ("bare", "effective")


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "spectral"
    j_max: int = 3
    n_max: int = 1
    N: int = 2
    detuning_reference: str = "bare"
    resonance_floor: float = 1e-3
    rtol: float = 1e-8
    max_panels: int = 40000
    positivity_tol: float = 1e-8
    convergence_threshold: float = 1e-6
    covariance_periods: int = 400
    mean_field_periods: int = 0
    samples_per_period: int = 64
    spectrum_span: float = 3.0        # in units of omega_m around 0
    spectrum_points: int = 2001

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"solver.mode must be one of {MODES}, got {self.mode!r}")
        if self.detuning_reference not in DETUNING_REFS:
            raise ConfigError(f"solver.detuning_reference must be one of {DETUNING_REFS}")
        if self.j_max < 0 or self.n_max < 1 or self.N < 0:
            raise ConfigError("need j_max >= 0, n_max >= 1, N >= 0")
        for name in ("resonance_floor", "rtol", "positivity_tol", "convergence_threshold",
                     "spectrum_span"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"solver.{name} must be positive")
        if self.covariance_periods < 2 or self.mean_field_periods < 0:
            raise ConfigError("covariance_periods >= 2 and mean_field_periods >= 0 required")
        if self.samples_per_period < 4 or self.spectrum_points < 2 or self.max_panels < 1:
            raise ConfigError("sample counts too small")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    prefix: str = ""


@dataclass(frozen=True)
class SweepConfig:
    path: str
    values: tuple

    def __post_init__(self):
        parse_path(self.path)
        if not self.values:
            raise ConfigError("sweep.values is empty")
        for v in self.values:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"sweep value {v!r} is not a finite number")


@dataclass(frozen=True)
class SyntheticConfig:
    omega_m: float
    gamma_m: float
    kappa: float
    nbar: float
    Omega: float
    G: dict
    Delta: dict

    def __post_init__(self):
        for name in ("omega_m", "gamma_m", "kappa", "Omega"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"synthetic.{name} must be positive")
        if not (math.isfinite(self.nbar) and self.nbar >= 0):
            raise ConfigError("synthetic.nbar must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig
    output: OutputConfig
    system: dict | None = None
    drive: tuple | None = None
    synthetic: SyntheticConfig | None = None
    sweep: SweepConfig | None = None
    rwa: dict | None = None
    name: str = ""
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def is_synthetic(self):
        return self.synthetic is not None

    def system_params(self) -> SystemParams:
        if self.system is None:
            raise ConfigError("configuration has no physical system section")
        return system_from_mapping(self.system, self.drive)

    def to_dict(self) -> dict:
        """Plain-data echo that :func:`parse_config` maps back to an equal config."""
        out: dict[str, Any] = {"name": self.name}
        if self.system is not None:
            out["system"] = dict(self.system)
            out["drive"] = [dict(e) for e in self.drive]
        if self.synthetic is not None:
            s = asdict(self.synthetic)
            s["G"] = {str(k): _complex_out(v) for k, v in sorted(self.synthetic.G.items())}
            s["Delta"] = {str(k): _complex_out(v) for k, v in sorted(self.synthetic.Delta.items())}
            out["synthetic"] = s
        out["solver"] = asdict(self.solver)
        out["output"] = asdict(self.output)
        if self.sweep is not None:
            out["sweep"] = {"path": self.sweep.path, "values": list(self.sweep.values)}
        if self.rwa is not None:
            out["rwa"] = {k: list(v) for k, v in self.rwa.items()}
        return out


def _complex_in(v, where):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"{where}: complex values are [re, im]")
        z = complex(float(v[0]), float(v[1]))
    elif isinstance(v, (int, float, str)) and not isinstance(v, bool):
        z = complex(_number(v, where))
    else:
        raise ConfigError(f"{where}: expected a number or [re, im], got {v!r}")
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"{where}: non-finite value")
    return z


def _complex_out(z):
    return z.real if z.imag == 0 else [z.real, z.imag]


def _harmonics(m, where):
    if not isinstance(m, dict):
        raise ConfigError(f"{where} must map harmonic index to value")
    try:
        return {int(k): _complex_in(v, f"{where}[{k}]") for k, v in m.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: harmonic indices must be integers") from exc


def _section(data, key, cls):
    raw = data.get(key) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    names = set(cls.__dataclass_fields__)
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {key}: {', '.join(sorted(unknown))}")
    kinds = {f.name: type(f.default) for f in cls.__dataclass_fields__.values()}
    vals = {}
    for k, v in raw.items():
        where = f"{key}.{k}"
        if kinds[k] is float:
            vals[k] = _number(v, where)
        elif kinds[k] is int:
            x = _number(v, where)
            if x != int(x):
                raise ConfigError(f"{where} must be an integer")
            vals[k] = int(x)
        else:
            if not isinstance(v, str):
                raise ConfigError(f"{where} must be a string")
            vals[k] = v
    try:
        return cls(**vals)
    except TypeError as exc:
        raise ConfigError(f"section {key!r}: {exc}") from exc


def _number(v, where):
    # YAML 1.1 reads 1.4e4 (no exponent sign) as a string
    if isinstance(v, str):
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def parse_config(data: dict) -> RunConfig:
    """Validate a configuration mapping."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    known = {"name", "system", "drive", "synthetic", "solver", "output", "sweep", "rwa"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    solver = _section(data, "solver", SolverConfig)
    output = _section(data, "output", OutputConfig)

    system = drive = synthetic = None
    if "synthetic" in data:
        if "system" in data:
            raise ConfigError("give either system/drive or synthetic, not both")
        s = data["synthetic"]
        if not isinstance(s, dict):
            raise ConfigError("synthetic must be a mapping")
        required = ("omega_m", "kappa", "nbar", "Omega", "G", "Delta")
        missing = [k for k in required if k not in s]
        if missing:
            raise ConfigError(f"synthetic section missing keys: {', '.join(missing)}")
        extra = set(s) - set(required) - {"Q", "gamma_m"}
        if extra:
            raise ConfigError(f"unknown keys in synthetic: {', '.join(sorted(extra))}")
        wm = _number(s["omega_m"], "synthetic.omega_m")
        if ("Q" in s) == ("gamma_m" in s):
            raise ConfigError("synthetic needs exactly one of Q or gamma_m")
        gm = _number(s["gamma_m"], "synthetic.gamma_m") if "gamma_m" in s else wm / _number(s["Q"], "synthetic.Q")
        synthetic = SyntheticConfig(
            omega_m=wm, gamma_m=gm, kappa=_number(s["kappa"], "synthetic.kappa"),
            nbar=_number(s["nbar"], "synthetic.nbar"), Omega=_number(s["Omega"], "synthetic.Omega"),
            G=_harmonics(s["G"], "synthetic.G"), Delta=_harmonics(s["Delta"], "synthetic.Delta"),
        )
        if solver.detuning_reference != "bare":
            raise ConfigError("detuning_reference applies only to physical systems")
    else:
        if "system" not in data:
            raise ConfigError("configuration needs a system or synthetic section")
        if not isinstance(data["system"], dict):
            raise ConfigError("system must be a mapping")
        system = {k: _number(v, f"system.{k}") for k, v in data["system"].items()}
        raw_drive = data.get("drive") or []
        if not isinstance(raw_drive, list):
            raise ConfigError("drive must be a list of {n, P_mW, phase_rad}")
        entries = []
        for i, e in enumerate(raw_drive):
            if not isinstance(e, dict) or "n" not in e or "P_mW" not in e:
                raise ConfigError(f"drive[{i}] needs keys n and P_mW")
            if set(e) - {"n", "P_mW", "phase_rad"}:
                raise ConfigError(f"drive[{i}] has unknown keys")
            if isinstance(e["n"], bool) or not isinstance(e["n"], int):
                raise ConfigError(f"drive[{i}].n must be an integer")
            entries.append({"n": e["n"], "P_mW": _number(e["P_mW"], f"drive[{i}].P_mW"),
                            "phase_rad": _number(e.get("phase_rad", 0.0), f"drive[{i}].phase_rad")})
        drive = tuple(entries)
        try:
            system_from_mapping(system, drive)
        except OptomodError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid system section: {exc}") from exc

    sweep = None
    if data.get("sweep") is not None:
        sw = data["sweep"]
        if not isinstance(sw, dict) or "path" not in sw or "values" not in sw:
            raise ConfigError("sweep needs path and values")
        if not isinstance(sw["values"], list):
            raise ConfigError("sweep.values must be a list")
        sweep = SweepConfig(str(sw["path"]), tuple(_number(v, "sweep.values") for v in sw["values"]))

    rwa = None
    if data.get("rwa") is not None:
        r = data["rwa"]
        keys = ("G0", "Gm1", "gamma_m", "kappa", "nbar")
        if not isinstance(r, dict) or set(r) != set(keys):
            raise ConfigError(f"rwa grid needs exactly the keys {keys}")
        rwa = {k: tuple(_number(v, f"rwa.{k}") for v in (r[k] if isinstance(r[k], list) else [r[k]]))
               for k in keys}

    return RunConfig(solver=solver, output=output, system=system, drive=drive,
                     synthetic=synthetic, sweep=sweep, rwa=rwa,
                     name=str(data.get("name", "")), source=copy.deepcopy(data))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_yaml(text)


def parse_yaml(text) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return parse_config(data)


def preset_names():
    files = resources.files("optomod") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def load_preset(name) -> RunConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_yaml((resources.files("optomod") / "presets" / f"{name}.yaml").read_text())


_PATH = re.compile(r"^(\w+)\.(\w+)(?:\[([-\d, ]+)\])?$")


def parse_path(path):
    """Split ``section.key`` or ``section.key[i,j]`` into its parts."""
    m = _PATH.match(path.strip())
    if not m:
        raise ConfigError(f"bad sweep path {path!r}; use section.key or section.key[n,...]")
    idx = None
    if m.group(3) is not None:
        try:
            idx = tuple(int(x) for x in m.group(3).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad index list in {path!r}") from exc
    return m.group(1), m.group(2), idx


def with_value(cfg: RunConfig, path, value) -> RunConfig:
    """Copy of ``cfg`` with the value at ``path`` replaced.

    ``drive.P_mW[1,-1]`` sets ``P_mW`` on the drive entries with ``n`` in
    ``{1, -1}``; ``synthetic.G[-1]`` sets one harmonic; ``system.T_K``
    sets a scalar.
    """
    section, key, idx = parse_path(path)
    data = cfg.to_dict()
    data.pop("sweep", None)
    if section not in data:
        raise ConfigError(f"sweep path {path!r}: no section {section!r}")
    target = data[section]
    if isinstance(target, list):
        if idx is None:
            raise ConfigError(f"sweep path {path!r}: list sections need [n,...]")
        hit = [e for e in target if e.get("n") in idx]
        if len(hit) != len(set(idx)):
            raise ConfigError(f"sweep path {path!r}: missing drive entries")
        for e in hit:
            e[key] = value
    elif idx is not None:
        if not isinstance(target.get(key), dict):
            raise ConfigError(f"sweep path {path!r}: {key} is not indexed")
        for i in idx:
            target[key][str(i)] = value
    else:
        if key not in target:
            raise ConfigError(f"sweep path {path!r}: unknown key {key!r}")
        target[key] = value
    return parse_config(data)
