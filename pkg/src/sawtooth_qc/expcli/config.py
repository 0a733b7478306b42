"""Experiment configuration: INI-style file plus command-line overrides."""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..gates import LAYOUT_COMPACT, LAYOUT_PAPER

EXPERIMENTS = ("spectrum", "husimi", "entropy", "threshold", "fidelity")
MATRIX_MAX_QUBITS = 12
STATEVECTOR_MAX_QUBITS = 16


class ConfigError(ValueError):
    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        where = ""
        if field_name:
            where += f"[{field_name}] "
        if line is not None:
            where += f"(line {line}) "
        super().__init__(where + message)
        self.field_name = field_name
        self.line = line


class ResourceGuard(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "entropy"
    n_q: int = 6
    nq_list: list[int] = field(default_factory=list)
    cap_k: float = math.sqrt(2.0)
    layout: str = LAYOUT_PAPER

    model: str = "static"
    j_coupling: float = 0.0  # J in units of delta
    qubit: int | None = None
    tau_g: float = 1.0

    eps_min: float = 1e-5
    eps_max: float = 1e-2
    eps_count: int = 7
    eps_spacing: str = "log"
    include_zero: bool = False
    eps_list: list[float] = field(default_factory=list)

    n_realizations: int = 10
    seed: int = 12345
    jobs: int = 1

    init: str = "eig:0"
    t_max: int = 200
    level: int = 0
    grid: tuple[int, int] = (64, 64)
    s: float = 1.0
    husimi_eps: list[float] = field(default_factory=list)

    a_const: float = 0.37
    b_const: float = 0.25
    out: str = "results"

    def eps_grid(self) -> list[float]:
        if self.eps_list:
            grid = sorted(set(float(e) for e in self.eps_list))
        elif self.eps_spacing == "log":
            grid = list(np.geomspace(self.eps_min, self.eps_max, self.eps_count))
        else:
            grid = list(np.linspace(self.eps_min, self.eps_max, self.eps_count))
        grid = [float(e) for e in grid]
        if self.include_zero and 0.0 not in grid:
            grid = [0.0] + grid
        return grid

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        cfg = cls()
        apply_overrides(cfg, data)
        return cfg


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}

# aliases accepted in config files
_ALIASES = {"nq": "n_q", "realizations": "n_realizations", "tmax": "t_max", "k": "cap_k", "j": "j_coupling", "out_dir": "out"}


def _coerce(name: str, value, line: int | None = None):
    f = _FIELDS[name]
    typ = str(f.type)
    try:
        if isinstance(value, str):
            value = value.strip()
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "bool":
            if isinstance(value, bool):
                return value
            low = str(value).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if typ == "int | None":
            if value is None or str(value).lower() in ("", "none", "random"):
                return None
            return int(value)
        if typ.startswith("list"):
            conv = int if "int" in typ else float
            if isinstance(value, str):
                value = [v for v in value.replace(";", ",").split(",") if v.strip()]
            return [conv(v) for v in value]
        if typ.startswith("tuple"):
            if isinstance(value, str):
                value = value.lower().replace("x", ",").split(",")
            vals = tuple(int(v) for v in value)
            if len(vals) != 2:
                raise ValueError("grid needs two sizes")
            return vals
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r}: {exc}", name, line) from exc


def apply_overrides(cfg: ExperimentConfig, data: dict, lines: dict | None = None) -> ExperimentConfig:
    for key, value in data.items():
        name = _ALIASES.get(key, key).replace("-", "_")
        line = (lines or {}).get(key)
        if name not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", key, line)
        setattr(cfg, name, _coerce(name, value, line))
    return cfg


def load_config(path: str | os.PathLike, cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read ``key = value`` pairs from any section of an INI file."""
    cfg = cfg or ExperimentConfig()
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    lines = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        key = raw.split("=", 1)[0].strip().lower()
        if "=" in raw and key:
            lines.setdefault(key, i)
    data = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            data[key] = value
    return apply_overrides(cfg, data, lines)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}", "experiment")
    if cfg.model not in ("static", "single"):
        raise ConfigError("model must be 'static' or 'single'", "model")
    if cfg.layout not in (LAYOUT_PAPER, LAYOUT_COMPACT):
        raise ConfigError(f"layout must be {LAYOUT_PAPER!r} or {LAYOUT_COMPACT!r}", "layout")
    if cfg.eps_spacing not in ("log", "linear"):
        raise ConfigError("eps_spacing must be 'log' or 'linear'", "eps_spacing")
    if not cfg.eps_list:
        if cfg.eps_spacing == "log" and cfg.eps_min <= 0:
            raise ConfigError("eps_min must be > 0 for log spacing (use include_zero for eps = 0)", "eps_min")
        if cfg.eps_max < cfg.eps_min:
            raise ConfigError("eps_max must be >= eps_min", "eps_max")
        if cfg.eps_count < 1:
            raise ConfigError("eps_count must be >= 1", "eps_count")
    elif min(cfg.eps_list) < 0:
        raise ConfigError("epsilon values must be >= 0", "eps_list")
    if cfg.n_realizations < 1:
        raise ConfigError("need at least one realization", "n_realizations")
    if cfg.tau_g <= 0:
        raise ConfigError("tau_g must be > 0", "tau_g")
    if cfg.j_coupling < 0:
        raise ConfigError("j_coupling must be >= 0", "j_coupling")
    if cfg.model == "single" and cfg.j_coupling:
        raise ConfigError("the single-impurity model has no couplings", "j_coupling")
    if cfg.s <= 0:
        raise ConfigError("s must be > 0", "s")
    if cfg.t_max < 1:
        raise ConfigError("t_max must be >= 1", "t_max")
    if min(cfg.grid) < 1:
        raise ConfigError("grid sizes must be positive", "grid")
    kind, _, val = cfg.init.partition(":")
    if kind not in ("eig", "mom") or not val.lstrip("-").isdigit():
        raise ConfigError("init must look like eig:IDX or mom:N", "init")
    if cfg.jobs < 1:
        cfg.jobs = os.cpu_count() or 1

    sizes = cfg.nq_list if (cfg.experiment == "threshold" and cfg.nq_list) else [cfg.n_q]
    for n_q in sizes:
        if n_q < 2:
            raise ConfigError("need at least two qubits", "n_q")
        needs_matrix = cfg.experiment != "fidelity" or kind == "eig"
        limit = MATRIX_MAX_QUBITS if needs_matrix else STATEVECTOR_MAX_QUBITS
        if n_q > limit:
            what = "matrix-building experiments" if needs_matrix else "statevector runs"
            raise ResourceGuard(f"n_q={n_q} exceeds the limit of {limit} for {what}")
    if cfg.qubit is not None and not 0 <= cfg.qubit < min(sizes):
        raise ConfigError("impurity qubit outside the register", "qubit")
    if kind == "eig" and not 0 <= int(val) < 2 ** min(sizes):
        raise ConfigError("eigenstate index outside [0, N)", "init")
    if cfg.experiment in ("spectrum", "husimi") and not 0 <= cfg.level < 2 ** cfg.n_q:
        raise ConfigError("level index outside [0, N)", "level")

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}", "out") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError("output directory is not writable", "out")
    return cfg
