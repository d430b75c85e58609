"""Flat ``section.key = value`` run configuration.

Example::

    problem.geometry = interval(-1, 1)
    problem.p = 2
    problem.s = 0.5
    problem.phi = power(0.5)
    problem.f = zero
    problem.g = zero
    problem.u0 = bump(1)
    grid.h = 0.015625
    grid.R_ext = 3.125
    evolution.T_final = 2
    evolution.N_steps = 400
    certificates = growth, energy, extinction
    certificate.extinction.R = 1
    output_dir = runs/fast
    seed = 0

Blank lines and ``#`` comments are ignored.  Every cross-parameter
hypothesis the requested certificates depend on is checked by
:func:`validate` before anything is computed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GateError
from .estimates import smoothing_exponents
from .grid import build_grid, build_kernel, parse_geometry
from .nonlinearity import parse_perturbation, parse_phi
from .resolvent import ResolventConfig
from .semigroup import EvolutionConfig, Forcing, ProblemSpec

CERTIFICATES = (
    "growth",
    "comparison",
    "energy",
    "level_set",
    "truncated_growth",
    "decay",
    "forced_smoothing",
    "lipschitz",
    "exponential_formula",
    "extinction",
)

_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$")
_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*(.*?)\s*\))?\s*$")


class ConfigError(ConfigurationError):
    """Parse or validation failure, with the offending line and key when known."""

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass
class RunConfig:
    """Parsed run configuration; ``source`` maps keys to line numbers."""

    geometry: str = "interval(-1, 1)"
    p: float = 2.0
    s: float = 0.5
    phi: str = "power(1)"
    f: str = "zero"
    g: str = "zero"
    u0: str = "bump(1)"
    u0_scale: float = 1.0
    h: float = 0.02
    R_ext: float = 2.0
    T_final: float = 1.0
    N_steps: int = 100
    record_every: int = 1
    solver: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    cert_params: dict = field(default_factory=dict)
    output_dir: str = "runs/out"
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)
    source: dict = field(default_factory=dict)

    def param(self, cert, key, default=None):
        return self.cert_params.get(cert, {}).get(key, default)


# keys -> (attribute, converter)
_FIELDS = {
    "problem.geometry": ("geometry", str),
    "problem.p": ("p", float),
    "problem.s": ("s", float),
    "problem.phi": ("phi", str),
    "problem.f": ("f", str),
    "problem.g": ("g", str),
    "problem.u0": ("u0", str),
    "problem.u0_scale": ("u0_scale", float),
    "grid.h": ("h", float),
    "grid.R_ext": ("R_ext", float),
    "evolution.T_final": ("T_final", float),
    "evolution.N_steps": ("N_steps", int),
    "evolution.record_every": ("record_every", int),
    "output_dir": ("output_dir", str),
    "seed": ("seed", int),
}
_SOLVER_KEYS = {
    "outer_max_iter": int,
    "outer_tol": float,
    "inner_tol": float,
    "inner_max_iter": int,
    "epsilon_reg": float,
    "hessian_floor": float,
    "max_backtracks": int,
}


def _convert(conv, value, line, key):
    try:
        if conv is int:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return conv(value)
    except ValueError:
        raise ConfigError(f"cannot read {value!r} as {conv.__name__}", line, key) from None


def parse_value(text):
    """Certificate parameter: number, ``inf``, comma list of numbers, or string."""
    parts = [t.strip() for t in text.split(",")]
    try:
        vals = [float(t) for t in parts]
    except ValueError:
        return text
    return vals[0] if len(vals) == 1 else vals


def parse_config(text, base_dir=None):
    """Parse configuration text into a :class:`RunConfig`."""
    cfg = RunConfig(base_dir=Path(base_dir) if base_dir is not None else Path.cwd())
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if match is None:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = match.groups()
        if not value:
            raise ConfigError("empty value", lineno, key)
        if key in cfg.source:
            raise ConfigError(f"duplicate key (first set on line {cfg.source[key]})", lineno, key)
        cfg.source[key] = lineno
        if key in _FIELDS:
            attr, conv = _FIELDS[key]
            setattr(cfg, attr, _convert(conv, value, lineno, key))
        elif key.startswith("solver."):
            name = key[len("solver."):]
            if name not in _SOLVER_KEYS:
                raise ConfigError("unknown solver option", lineno, key)
            cfg.solver[name] = _convert(_SOLVER_KEYS[name], value, lineno, key)
        elif key == "certificates":
            names = [c.strip() for c in value.split(",") if c.strip()]
            for c in names:
                if c not in CERTIFICATES:
                    raise ConfigError(f"unknown certificate {c!r}; choose from {', '.join(CERTIFICATES)}", lineno, key)
            cfg.certificates = names
        elif key.startswith("certificate."):
            rest = key[len("certificate."):].split(".", 1)
            if len(rest) != 2 or rest[0] not in CERTIFICATES:
                raise ConfigError("expected certificate.<name>.<param>", lineno, key)
            cfg.cert_params.setdefault(rest[0], {})[rest[1]] = parse_value(value)
        else:
            raise ConfigError("unknown key", lineno, key)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def set_field(cfg, name, value):
    """Copy of ``cfg`` with the numeric field ``name`` (config key or attribute) set."""
    attr = _FIELDS[name][0] if name in _FIELDS else name
    numeric = {a for a, conv in _FIELDS.values() if conv in (int, float)}
    if attr not in numeric:
        raise ConfigError(f"sweep axis must be a numeric field, one of {sorted(numeric)}", key=name)
    conv = int if isinstance(getattr(cfg, attr), int) else float
    return replace(cfg, **{attr: _convert(conv, str(value), None, name)})


# --------------------------------------------------------------------------
# building the objects


def _call_args(text, what):
    match = _CALL.match(text)
    if match is None:
        raise ConfigError(f"cannot parse {what} spec {text!r}")
    name, args = match.groups()
    if not args:
        return name, []
    try:
        return name, [float(a) for a in args.split(",")]
    except ValueError:
        raise ConfigError(f"{what} spec {text!r} needs numeric arguments") from None


def domain_profile(grid):
    """Quadratic bump equal to 1 at the domain centre and 0 on its boundary."""
    geo = grid.geometry
    x = grid.nodes
    kind = type(geo).__name__
    if kind == "Interval":
        c, hw = 0.5 * (geo.a + geo.b), 0.5 * (geo.b - geo.a)
        prof = 1.0 - ((x[:, 0] - c) / hw) ** 2
    elif kind == "Box":
        prof = np.ones(grid.size)
        for k, (lo, hi) in enumerate(((geo.a1, geo.b1), (geo.a2, geo.b2))):
            c, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
            prof *= 1.0 - ((x[:, k] - c) / hw) ** 2
    else:
        r2 = (x[:, 0] - geo.cx) ** 2 + (x[:, 1] - geo.cy) ** 2
        prof = 1.0 - r2 / geo.r**2
    prof = np.maximum(prof, 0.0)
    prof[grid.exterior] = 0.0
    return prof


def build_u0(spec, grid, seed=0, scale=1.0):
    """Initial field from ``zero``, ``constant(a)``, ``bump(a)``, ``gaussian(a, w)``,
    ``random(a)`` (uniform on ``[-a, a]``, seeded) or ``positive_random(a)``."""
    name, args = _call_args(spec, "u0")
    I = grid.interior
    u = grid.zeros()
    if name == "zero":
        pass
    elif name == "constant" and len(args) == 1:
        u[I] = args[0]
    elif name == "bump" and len(args) == 1:
        u = args[0] * domain_profile(grid)
    elif name == "gaussian" and len(args) == 2:
        centre = grid.nodes[I].mean(axis=0)
        r2 = np.sum((grid.nodes[I] - centre) ** 2, axis=1)
        u[I] = args[0] * np.exp(-r2 / (2 * args[1] ** 2))
    elif name in ("random", "positive_random") and len(args) == 1:
        rng = np.random.default_rng(seed)
        lo = -args[0] if name == "random" else 0.0
        u[I] = rng.uniform(lo, args[0], size=len(I))
    else:
        raise ConfigError(f"unknown or malformed initial datum {spec!r}", key="problem.u0")
    return scale * u


def build_forcing(spec, grid):
    """Forcing from ``zero``, ``constant(a)`` or ``decaying(a, r)`` (``a e^{-rt}``),
    each times the domain bump profile."""
    name, args = _call_args(spec, "g")
    if name == "zero":
        return Forcing.zero()
    prof = domain_profile(grid)
    if name == "constant" and len(args) == 1:
        return Forcing.separable(lambda t: 1.0, args[0] * prof, description=spec)
    if name == "decaying" and len(args) == 2:
        a, r = args
        return Forcing.separable(lambda t: math.exp(-r * t), a * prof, description=spec)
    raise ConfigError(f"unknown or malformed forcing {spec!r}", key="problem.g")


@dataclass
class Setup:
    """Objects built from a validated configuration."""

    config: RunConfig
    grid: object
    kernel: object
    problem: ProblemSpec
    evolution: EvolutionConfig
    u0: np.ndarray
    exponents: object = None


def _wrap(exc, key):
    return ConfigError(str(exc), key=key)


def validate(cfg):
    """Check every gate the configuration relies on, before any compute.

    Returns the smoothing exponents when a smoothing certificate is requested.

    Raises
    ------
    GateError
        Naming the violated inequality.
    ConfigError
        For malformed specs.
    """
    for key in ("p", "h", "R_ext", "T_final"):
        if not getattr(cfg, key) > 0:
            raise ConfigError("must be positive", cfg.source.get(key), key)
    if not cfg.p > 1:
        raise GateError(f"p = {cfg.p:g} must exceed 1", "p > 1")
    if not 0 < cfg.s < 1:
        raise GateError(f"s = {cfg.s:g} must lie in (0, 1)", "0 < s < 1")
    if cfg.N_steps < 1 or cfg.record_every < 1:
        raise ConfigError("N_steps and record_every must be positive")
    try:
        geometry = parse_geometry(cfg.geometry)
        phi = parse_phi(cfg.phi, cfg.base_dir)
        pert = parse_perturbation(cfg.f)
    except ConfigurationError as exc:
        raise _wrap(exc, "problem") from None
    d = geometry.dim
    tau = cfg.T_final / cfg.N_steps
    if not tau * pert.omega < 1:
        raise GateError(f"tau*omega = {tau * pert.omega:g} must be < 1", "tau * omega < 1")
    exps = None
    smoothing = [c for c in ("decay", "forced_smoothing") if c in cfg.certificates]
    for cert in smoothing:
        if phi.m is None:
            raise GateError("smoothing certificates need phi = power(m)", "phi(u) = u^m")
        exps = smoothing_exponents(
            phi.m,
            cfg.p,
            cfg.s,
            d,
            cfg.param(cert, "ell", 1.0),
            rho=cfg.param(cert, "rho", math.inf),
            psi=cfg.param(cert, "psi", math.inf),
            p_tilde=cfg.param(cert, "p_tilde"),
            forcing=cert == "forced_smoothing",
        )
    if "lipschitz" in cfg.certificates and phi.m is not None:
        if math.isclose(phi.m * (cfg.p - 1.0), 1.0):
            raise GateError("the Lipschitz-in-time constant needs m(p-1) != 1", "m(p-1) != 1")
    if "level_set" in cfg.certificates and (phi.m is None or phi.m < 1):
        raise GateError("the level-set inequality needs phi = power(m) with m >= 1", "m >= 1")
    if "extinction" in cfg.certificates:
        R = float(cfg.param("extinction", "R", geometry.bounding_radius()))
        if cfg.R_ext < 3 * R:
            raise GateError(f"R_ext = {cfg.R_ext:g} must be at least 3R = {3 * R:g}", "R_ext >= 3R")
    return exps


def build(cfg):
    """Validate and build grid, kernel, problem and initial datum."""
    exps = validate(cfg)
    try:
        grid = build_grid(parse_geometry(cfg.geometry), cfg.h, cfg.R_ext)
    except ConfigurationError as exc:
        raise _wrap(exc, "grid") from None
    kernel = build_kernel(grid, cfg.s, cfg.p)
    problem = ProblemSpec(
        kernel,
        parse_phi(cfg.phi, cfg.base_dir),
        parse_perturbation(cfg.f),
        build_forcing(cfg.g, grid),
    )
    solver = ResolventConfig(1.0, **cfg.solver) if cfg.solver else None
    evo = EvolutionConfig(cfg.T_final, cfg.N_steps, cfg.record_every, solver)
    u0 = build_u0(cfg.u0, grid, cfg.seed, cfg.u0_scale)
    return Setup(cfg, grid, kernel, problem, evo, u0, exps)
