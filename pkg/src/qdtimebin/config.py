"""Run configuration in a flat ``section.key = value`` text format.

Grammar (one entry per line)::

    # comment                     blank lines and '#' lines are ignored
    system.kappa = 2.5            number
    pulses.center2 = 19*pi        arithmetic on numbers and ``pi`` (+ - * / **, parentheses)
    stepper.method = rk4          bare word
    sweep.gamma_d = 0, 0.01, 0.02 comma-separated list
    g3.tau_min = auto             ``auto`` selects the computed default

Keys not listed in :data:`KEYS` are rejected, as are duplicates.  ``dumps``
writes every key with ``repr`` floats, so ``loads(dumps(c)) == c``.
"""

from __future__ import annotations

import ast
import hashlib
import math
import operator
from dataclasses import dataclass, field, fields, replace

from .model import PulsePair, SystemParams, enumerate_basis
from .propagator import StepperConfig


class ConfigError(ValueError):
    """Invalid configuration text or value."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def eval_number(text: str) -> float:
    """Evaluate a numeric expression that may use ``pi``; nothing else is allowed."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(f"not a number: {text!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported expression: {text!r}")

    try:
        value = ev(tree)
    except ZeroDivisionError:
        raise ConfigError(f"division by zero in {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"non-finite value: {text!r}")
    return value


@dataclass(frozen=True)
class G3Settings:
    T: float = 14 * math.pi
    T_bin: float = 6 * math.pi
    phi: float = 0.0
    tau_min: float | None = None  # None: -T_bin
    tau_max: float | None = None  # None: 2T + T_bin
    quadrature: str = "trapezoid"
    lattice_step: float | None = None  # None: tau_p / 8, or tau_p / 4 in fast mode
    phase_offset: float | None = 0.0  # None: calibrate to the central peak


@dataclass(frozen=True)
class SweepSettings:
    phi_points: int = 13
    gamma_d: tuple = tuple(round(0.005 * k, 10) for k in range(11))
    T_values: tuple = tuple(math.pi * (12 + 0.5 * k) for k in range(9))


@dataclass(frozen=True)
class RunSettings:
    out: str = "out"
    workers: int = 1
    fast: bool = False
    max_photons: int = 2
    t_end: float | None = None  # None: second pulse centre + 3 tau_p


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    pulses: PulsePair = field(default_factory=PulsePair)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    g3: G3Settings = field(default_factory=G3Settings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def hash(self) -> str:
        """SHA-256 of the canonical text form."""
        return hashlib.sha256(dumps(self).encode()).hexdigest()

    def header(self) -> dict:
        """Every parameter plus the config hash, for CSV headers."""
        head = {"config_hash": self.hash()}
        for section, obj in _sections(self):
            for f in fields(obj):
                head[f"{section}.{f.name}"] = _format(getattr(obj, f.name))
        return head


SECTIONS = ("system", "pulses", "stepper", "g3", "sweep", "run")


def _sections(cfg: RunConfig):
    return [(name, getattr(cfg, name)) for name in SECTIONS]


def _default_types():
    return {name: obj for name, obj in _sections(RunConfig())}


KEYS = tuple(f"{s}.{f.name}" for s, obj in _default_types().items() for f in fields(obj))

_STR_KEYS = {"stepper.method", "g3.quadrature", "run.out"}
_INT_KEYS = {"stepper.record_stride", "sweep.phi_points", "run.workers", "run.max_photons"}
_BOOL_KEYS = {"run.fast"}
_LIST_KEYS = {"sweep.gamma_d", "sweep.T_values"}
_AUTO_KEYS = {"g3.tau_min", "g3.tau_max", "g3.lattice_step", "g3.phase_offset", "run.t_end"}


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse_value(key: str, text: str):
    text = text.strip()
    if key in _AUTO_KEYS and text == "auto":
        return None
    if key in _STR_KEYS:
        if not text:
            raise ConfigError(f"{key}: empty value")
        return text
    if key in _BOOL_KEYS:
        low = text.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{key}: expected true or false, got {text!r}")
        return low == "true"
    if key in _LIST_KEYS:
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list")
        return tuple(eval_number(t) for t in items)
    value = eval_number(text)
    if key in _INT_KEYS:
        if value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {text!r}")
        return int(value)
    return value


def loads(text: str) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            parsed = _parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        section, name = key.split(".", 1)
        values[section][name] = parsed
    return build(values)


def build(values: dict) -> RunConfig:
    """Assemble and validate a config from ``{section: {key: value}}``."""
    defaults = _default_types()
    parts = {}
    for section in SECTIONS:
        try:
            parts[section] = replace(defaults[section], **values.get(section, {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from None
    cfg = RunConfig(**parts)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    g, s, r = cfg.g3, cfg.sweep, cfg.run
    if not 0 < g.T_bin < g.T:
        raise ConfigError(f"g3: need 0 < T_bin < T, got T_bin = {g.T_bin}, T = {g.T}")
    if g.tau_min is not None and g.tau_max is not None and g.tau_max <= g.tau_min:
        raise ConfigError("g3: empty tau range (tau_max <= tau_min)")
    if g.lattice_step is not None and g.lattice_step <= 0:
        raise ConfigError("g3: lattice_step must be > 0")
    if s.phi_points < 4:
        raise ConfigError("sweep: phi_points must be >= 4")
    if any(v < 0 for v in s.gamma_d) or any(b <= a for a, b in zip(s.gamma_d, s.gamma_d[1:])):
        raise ConfigError("sweep: gamma_d must be >= 0 and strictly ascending")
    if any(b <= a for a, b in zip(s.T_values, s.T_values[1:])):
        raise ConfigError("sweep: T_values must be strictly ascending")
    if r.workers < 1:
        raise ConfigError("run: workers must be >= 1")
    try:
        enumerate_basis(r.max_photons)
    except ValueError as exc:
        raise ConfigError(f"run: {exc}") from None


def dumps(cfg: RunConfig) -> str:
    lines = []
    for section, obj in _sections(cfg):
        lines.append(f"# {section}")
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
