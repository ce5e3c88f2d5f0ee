"""Run configuration: a TOML file with one table per concern.

Every field has a default, unknown keys are rejected by name, and
parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = ("solve", "continue", "sweep", "linmap", "morph", "validate")
REGIMES = ("local", "global_uniform", "mixed", "nonlocal")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSection:
    regime: str = "local"
    g_eff: float | None = 0.1
    g: float | None = None
    a: float | None = None
    w_s: float | None = None
    w_a: float | None = None
    d_end: float | None = None
    tip_condition: str = "curvature"


@dataclass(frozen=True)
class NumericsSection:
    n_points: int = 129
    tol: float = 1e-10
    max_iter: int = 50
    damping_levels: int = 8
    halvings: int = 6
    ramp_steps: int = 20
    jump_threshold: float = 10.0
    jump_floor: float = 0.05
    refine_tol: float = 1e-3
    kernel_quadrature: str = "nystrom"


@dataclass(frozen=True)
class ContinuationSection:
    # "g" means g_eff in the local regime
    param: str = "g"
    start: float = 0.0
    stop: float = 8.0
    count: int = 81


@dataclass(frozen=True)
class AxisSpec:
    name: str
    start: float
    stop: float
    count: int


def _default_axes():
    return (
        AxisSpec("w_a", 0.01, 0.6, 8),
        AxisSpec("g", 0.1, 8.0, 8),
        AxisSpec("a", 0.0, 60.0, 12),
    )


@dataclass(frozen=True)
class SweepSection:
    n_points: int = 65
    axes: tuple = field(default_factory=_default_axes)


@dataclass(frozen=True)
class LinmapSection:
    g: float = 0.1
    w_start: float = 0.05
    w_stop: float = 0.95
    w_count: int = 19
    a_values: tuple = (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0)
    n_modes: int = 50


@dataclass(frozen=True)
class MorphSection:
    g_values: tuple = (0.5, 1.0, 2.0, 4.0)
    k_min: float = 0.5
    k_max: float = 8.0
    k_count: int = 60
    w_min: float = 0.01
    w_max: float = 0.6
    w_count: int = 40
    include_delta: bool = False
    n_points: int = 97


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    precision: int = 17


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    problem: ProblemSection = field(default_factory=ProblemSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    continuation: ContinuationSection = field(default_factory=ContinuationSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    linmap: LinmapSection = field(default_factory=LinmapSection)
    morph: MorphSection = field(default_factory=MorphSection)
    output: OutputSection = field(default_factory=OutputSection)


_SECTIONS = {
    "problem": ProblemSection,
    "numerics": NumericsSection,
    "continuation": ContinuationSection,
    "sweep": SweepSection,
    "linmap": LinmapSection,
    "morph": MorphSection,
    "output": OutputSection,
}


def _coerce(where, name, value, default):
    """Check a TOML value against the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}.{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}.{name}: expected an array, got {value!r}")
        return tuple(_coerce(where, name, v, 0.0) for v in value)
    return value


def _section(name, cls, table):
    if not isinstance(table, dict):
        raise ConfigError(f"{name}: expected a table")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
        if cls is SweepSection and key == "axes":
            kwargs[key] = _axes(value)
        else:
            kwargs[key] = _coerce(name, key, value, getattr(defaults, key))
    return cls(**kwargs)


def _axes(value):
    if not isinstance(value, list) or not value:
        raise ConfigError("sweep.axes: expected a non-empty array of tables")
    out = []
    for i, item in enumerate(value):
        where = f"sweep.axes[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where}: expected a table")
        for key in item:
            if key not in ("name", "start", "stop", "count"):
                raise ConfigError(f"unknown key '{where}.{key}'")
        try:
            out.append(
                AxisSpec(
                    _coerce(where, "name", item["name"], ""),
                    _coerce(where, "start", item["start"], 0.0),
                    _coerce(where, "stop", item["stop"], 0.0),
                    _coerce(where, "count", item["count"], 0),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc.args[0]!r}") from None
    return tuple(out)


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {cfg.command!r}; choose from {COMMANDS}")
    if cfg.problem.regime not in REGIMES:
        raise ConfigError(f"problem.regime: unknown regime {cfg.problem.regime!r}; choose from {REGIMES}")
    if cfg.problem.tip_condition not in ("curvature", "moment"):
        raise ConfigError(f"problem.tip_condition: unknown value {cfg.problem.tip_condition!r}")
    if cfg.numerics.kernel_quadrature not in ("nystrom", "product"):
        raise ConfigError(f"numerics.kernel_quadrature: unknown value {cfg.numerics.kernel_quadrature!r}")
    for where, n in (("numerics.n_points", cfg.numerics.n_points), ("sweep.n_points", cfg.sweep.n_points),
                     ("morph.n_points", cfg.morph.n_points)):
        if n < 4:
            raise ConfigError(f"{where}: must be >= 4, got {n}")
    if cfg.numerics.tol <= 0:
        raise ConfigError("numerics.tol: must be positive")
    for where, n in (("continuation.count", cfg.continuation.count), ("morph.k_count", cfg.morph.k_count),
                     ("morph.w_count", cfg.morph.w_count), ("linmap.w_count", cfg.linmap.w_count)):
        if n < 1:
            raise ConfigError(f"{where}: must be >= 1")
    if not 1 <= len(cfg.sweep.axes) <= 3:
        raise ConfigError("sweep.axes: give 1 to 3 axes")
    if cfg.output.precision != 17:
        raise ConfigError("output.precision: only 17 significant digits are supported")
    return cfg


def from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for key, value in data.items():
        if key == "command":
            if not isinstance(value, str):
                raise ConfigError("command: expected a string")
            kwargs[key] = value
        elif key in _SECTIONS:
            kwargs[key] = _section(key, _SECTIONS[key], value)
        else:
            raise ConfigError(f"unknown key '{key}'")
    return validate(RunConfig(**kwargs))


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_dict(data)


def load(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data)


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_strip_none(v) for v in obj]
    return obj


def to_dict(cfg: RunConfig) -> dict:
    return _strip_none(asdict(cfg))


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def record_text(cfg: RunConfig) -> str:
    """Config as embedded in data files: where the output went is not part
    of what produced it, so the directory is left out."""
    data = to_dict(cfg)
    data["output"].pop("directory", None)
    return tomli_w.dumps(data)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(record_text(cfg).encode()).hexdigest()[:16]


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply command-line overrides; None means "not given"."""
    problem = cfg.problem
    changes = {k: float(v) for k, v in overrides.items() if v is not None and k in
               ("g", "a", "w_s", "w_a", "d_end", "g_eff")}
    if changes:
        problem = replace(problem, **changes)
    out = replace(cfg, problem=problem)
    if overrides.get("command"):
        out = replace(out, command=overrides["command"])
    if overrides.get("n_points") is not None:
        out = replace(out, numerics=replace(out.numerics, n_points=int(overrides["n_points"])))
    if overrides.get("out") is not None:
        out = replace(out, output=replace(out.output, directory=str(overrides["out"])))
    return validate(out)
