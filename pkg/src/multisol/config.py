"""Problem files: a sectioned ``key = value`` text format (JSON also accepted).

Grammar::

    file    := (blank | comment | section | entry)*
    comment := '#' text
    section := '[' name ']'
    entry   := key '=' value
    value   := scalar | list | table
    list    := scalar (',' scalar)+
    table   := list (';' list)*

Scalars are numbers, ``true``/``false`` or bare strings.  Keys are checked
against the schema below; errors carry the line and column of the offending
token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .functionals import Kind, ProblemSpec
from .minimizer import SolveOptions
from .nonlinearity import Coercivity, Growth, from_source
from .radial_grid import build_grid

FLOAT, INT, BOOL, STR, LIST, TABLE = "float", "int", "bool", "str", "list", "table"

SCHEMA: dict = {
    "problem": {"kind": STR, "constraint": FLOAT, "e_charge": FLOAT},
    "nonlinearity": {
        "type": STR, "omega": FLOAT, "scale": FLOAT, "coeffs": TABLE, "roots": LIST, "power": INT,
        "a": FLOAT, "p": FLOAT, "b": FLOAT, "q": FLOAT, "breaks": LIST,
        "growth_p": FLOAT, "growth_q": FLOAT, "growth_c1": FLOAT, "growth_c2": FLOAT,
        "coercivity_c3": FLOAT, "coercivity_c4": FLOAT, "coercivity_gamma": FLOAT,
    },
    "grid": {"dim": INT, "r_max": FLOAT, "M": INT, "stretch": FLOAT},
    "solver": {
        "max_iters": INT, "step0": FLOAT, "step_shrink": FLOAT, "grad_tol": FLOAT, "constraint_tol": FLOAT,
        "boundary_margin": FLOAT, "restarts": INT, "blend_window": FLOAT, "r_n_schedule": LIST,
        "widths": LIST, "seed": INT, "armijo": FLOAT, "sobolev_shift": FLOAT, "newton": BOOL,
        "localization_tol": FLOAT, "s_max": FLOAT, "scan_points": INT, "root_tol": FLOAT,
    },
    "output": {"out_dir": STR, "emit_profiles": BOOL, "emit_trace": BOOL, "emit_plot_data": BOOL},
    "scan": {"values": LIST},
}
REQUIRED = {"problem": ("kind", "constraint"), "nonlinearity": ("type",), "grid": ("dim",)}
GRID_DEFAULTS = {"r_max": 60.0, "M": 2048, "stretch": 8.0}
OUTPUT_DEFAULTS = {"out_dir": "multisol-out", "emit_profiles": True, "emit_trace": False, "emit_plot_data": True}
NL_KEYS = {
    "poly_s2": ("coeffs", "scale"),
    "factored": ("roots", "power", "scale"),
    "power_well": ("a", "p", "b", "q", "scale"),
    "piecewise": ("breaks", "coeffs", "scale"),
}


@dataclass
class RunConfig:
    problem: dict = field(default_factory=dict)
    nonlinearity: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# scalar conversion


def _scalar(text: str, kind: str, line, col):
    t = text.strip()
    if kind == STR:
        if not t:
            raise ConfigError("empty value", line, col)
        return t
    if kind == BOOL:
        if t.lower() in ("true", "yes", "1"):
            return True
        if t.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"expected true/false, got {t!r}", line, col)
    try:
        if kind == INT:
            return int(t)
        return float(t)
    except ValueError:
        raise ConfigError(f"expected {kind}, got {t!r}", line, col) from None


def _value(text: str, kind: str, line, col):
    if kind in (LIST, TABLE):
        rows = text.split(";")
        if kind == LIST and len(rows) > 1:
            raise ConfigError("a list cannot contain ';'", line, col + text.index(";"))
        out, offset = [], 0
        for row in rows:
            items, pos = [], offset
            for tok in row.split(","):
                lead = len(tok) - len(tok.lstrip())
                items.append(_scalar(tok, FLOAT, line, col + pos + lead))
                pos += len(tok) + 1
            out.append(items)
            offset += len(row) + 1
        if kind == LIST:
            return out[0]
        return out[0] if len(out) == 1 else out
    return _scalar(text, kind, line, col)


def _check_typed(section: str, key: str, value, line=None, col=None):
    kind = SCHEMA[section][key]
    if kind == BOOL and not isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: expected true/false", line, col)
    if kind == INT and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{section}.{key}: expected an integer", line, col)
    if kind == FLOAT and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigError(f"{section}.{key}: expected a number", line, col)
    if kind == STR and not isinstance(value, str):
        raise ConfigError(f"{section}.{key}: expected a string", line, col)
    if kind in (LIST, TABLE) and not isinstance(value, list):
        raise ConfigError(f"{section}.{key}: expected a list", line, col)
    if kind == FLOAT:
        return float(value)
    if kind == LIST:
        return [float(x) for x in value]
    if kind == TABLE:
        if value and isinstance(value[0], list):
            return [[float(x) for x in row] for row in value]
        return [float(x) for x in value]
    return value


# ---------------------------------------------------------------------------
# parsing


def parse_text(text: str) -> RunConfig:
    if text.lstrip().startswith("{"):
        return parse_json(text)
    cfg = RunConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, col)
            name = stripped[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno, col + 1)
            section = name
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno, col)
        if section is None:
            raise ConfigError("entry before the first [section]", lineno, col)
        key_part, val_part = line.split("=", 1)
        key = key_part.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, col)
        target = getattr(cfg, section)
        if key in target:
            raise ConfigError(f"duplicate key {key!r}", lineno, col)
        vcol = len(key_part) + 2
        vcol += len(val_part) - len(val_part.lstrip())
        if not val_part.strip():
            raise ConfigError(f"missing value for {key!r}", lineno, vcol)
        target[key] = _value(val_part.strip(), SCHEMA[section][key], lineno, vcol)
    _validate(cfg)
    return cfg


def parse_json(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    cfg = RunConfig()
    for section, entries in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(entries, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in entries.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in {section!r}")
            getattr(cfg, section)[key] = _check_typed(section, key, value)
    _validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text)


def _validate(cfg: RunConfig) -> None:
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in getattr(cfg, section):
                raise ConfigError(f"missing required key {section}.{key}")
    kinds = [k.value for k in Kind]
    if cfg.problem["kind"] not in kinds:
        raise ConfigError(f"problem.kind must be one of {kinds}")
    t = cfg.nonlinearity["type"]
    if t not in NL_KEYS:
        raise ConfigError(f"nonlinearity.type must be one of {sorted(NL_KEYS)}")
    allowed = set(NL_KEYS[t]) | {"type", "omega"} | {k for k in SCHEMA["nonlinearity"] if k.startswith(("growth", "coercivity"))}
    extra = set(cfg.nonlinearity) - allowed
    if extra:
        raise ConfigError(f"keys {sorted(extra)} do not apply to nonlinearity type {t!r}")


# ---------------------------------------------------------------------------
# writing


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return "; ".join(", ".join(_fmt(x) for x in row) for row in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dump_text(cfg: RunConfig) -> str:
    lines = []
    for section in SCHEMA:
        entries = getattr(cfg, section)
        if not entries:
            continue
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in entries:
                lines.append(f"{key} = {_fmt(entries[key])}")
        lines.append("")
    return "\n".join(lines)


def with_defaults(cfg: RunConfig) -> RunConfig:
    """A copy with every default made explicit (what ``--dump-config`` prints)."""
    solver_defaults = {f.name: getattr(SolveOptions(), f.name) for f in fields(SolveOptions)}
    solver = {}
    for k, v in solver_defaults.items():
        v = cfg.solver.get(k, v)
        if v is None:
            continue
        solver[k] = list(v) if isinstance(v, tuple) else v
        if SCHEMA["solver"][k] == FLOAT:
            solver[k] = float(solver[k])
    problem = {"e_charge": 0.0, **cfg.problem}
    nl = {"omega": 0.0, "scale": 1.0, **cfg.nonlinearity}
    if nl["type"] == "factored":
        nl.setdefault("power", 2)
    if nl["type"] == "power_well":
        nl.setdefault("b", 0.0)
        nl.setdefault("q", 6.0)
    return RunConfig(problem, nl, {**GRID_DEFAULTS, **cfg.grid}, solver, {**OUTPUT_DEFAULTS, **cfg.output},
                     dict(cfg.scan))


# ---------------------------------------------------------------------------
# building objects


def build_nonlinearity(cfg: RunConfig):
    nl = dict(cfg.nonlinearity)
    growth = coercivity = None
    gk = ("growth_p", "growth_q", "growth_c1", "growth_c2")
    ck = ("coercivity_c3", "coercivity_c4", "coercivity_gamma")
    if any(k in nl for k in gk):
        if not all(k in nl for k in gk):
            raise ConfigError("growth needs growth_p, growth_q, growth_c1 and growth_c2")
        growth = Growth(*(nl.pop(k) for k in gk))
    if any(k in nl for k in ck):
        if not all(k in nl for k in ck):
            raise ConfigError("coercivity needs coercivity_c3, coercivity_c4 and coercivity_gamma")
        coercivity = Coercivity(*(nl.pop(k) for k in ck))
    omega = nl.pop("omega", 0.0)
    if "coeffs" in nl and nl["type"] == "poly_s2" and nl["coeffs"] and isinstance(nl["coeffs"][0], list):
        raise ConfigError("poly_s2 coefficients must be a single list")
    if nl["type"] == "piecewise" and nl.get("coeffs") and not isinstance(nl["coeffs"][0], list):
        nl["coeffs"] = [nl["coeffs"]]
    try:
        return from_source(nl, omega=omega, growth=growth, coercivity=coercivity)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"nonlinearity: {exc}") from None


def build_solver(cfg: RunConfig) -> SolveOptions:
    kw = dict(cfg.solver)
    for k in ("r_n_schedule", "widths"):
        if k in kw:
            kw[k] = tuple(kw[k])
    try:
        return SolveOptions(**kw)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def build_problem(cfg: RunConfig, constraint: float | None = None) -> ProblemSpec:
    g = {**GRID_DEFAULTS, **cfg.grid}
    try:
        grid = build_grid(g["dim"], g["r_max"], g["M"], g["stretch"])
        c = cfg.problem["constraint"] if constraint is None else constraint
        return ProblemSpec(Kind(cfg.problem["kind"]), build_nonlinearity(cfg), float(c), grid,
                           float(cfg.problem.get("e_charge", 0.0)))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None


def output_options(cfg: RunConfig) -> dict:
    return {**OUTPUT_DEFAULTS, **cfg.output}


def as_json(cfg: RunConfig) -> str:
    return json.dumps({s: getattr(cfg, s) for s in SCHEMA if getattr(cfg, s)}, indent=2)
