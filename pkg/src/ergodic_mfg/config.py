"""Run configuration: a strict YAML schema with one section per pipeline.

Unknown keys anywhere are rejected, as are non-positive values where a
positive one is required.  A configuration names one of the built-in
models and passes keyword parameters to its factory; the parameter names
are checked against the factory signature.

Example::

    model:
      name: lq_mfg
      params: {kappa: -0.5, drift_scheme: central_monotone}
    grid: {L: 6.0, h: 0.05}
    solver: {damping: 0.5, tol: 1.0e-10, max_iters: 500, mode: picard, init: [-2.0, 0.0, 2.0]}
    horizon: {T: [5, 10, 20, 40], dt: 0.05, lambdas: [0.5], t0: 1.0, eta: 1.0}
    nplayer: {N: [4, 8, 16, 32, 64], mode: exact_moment, n_mc: 2000, seed: 0}
    output: {directory: out/lq_mfg, stride: 20, plots: true}
"""

from __future__ import annotations

import dataclasses
import inspect
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .grid import Grid
from .model import BUILTIN_MODELS, ModelSpec, builtin_model


class ConfigError(ValueError):
    """Invalid configuration; ``code`` is a machine-readable tag."""

    def __init__(self, message: str, code: str = "CONFIG_INVALID"):
        super().__init__(message)
        self.code = code


@dataclass
class ModelSection:
    name: str = "ou"
    params: dict = field(default_factory=dict)


DEFAULT_SPACING = 0.05


@dataclass
class GridSection:
    L: float = 6.0
    n: int | None = None
    h: float | None = None
    dimension: int = 1


@dataclass
class SolverSection:
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 500
    mode: str = "picard"
    init: list = field(default_factory=lambda: [0.0])
    n_probe: int = 50
    seed: int = 0


@dataclass
class HorizonSection:
    T: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    dt: float = 0.05
    lambdas: list = field(default_factory=lambda: [0.5])
    t0: float = 1.0
    eta: float = 1.0
    phi0: str = "zero"
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 300


@dataclass
class NplayerSection:
    N: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    mode: str = "exact_moment"
    n_mc: int = 2000
    seed: int = 0
    window: float = 3.0
    particles_N: int = 64
    T_sim: float = 200.0
    dt_sim: float = 0.01


@dataclass
class OutputSection:
    directory: str = "out"
    stride: int = 10
    plots: bool = True


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    horizon: HorizonSection = field(default_factory=HorizonSection)
    nplayer: NplayerSection = field(default_factory=NplayerSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def build_spec(self) -> ModelSpec:
        return builtin_model(self.model.name, **self.model.params)

    def build_grid(self) -> Grid:
        g = self.grid
        if g.h is not None:
            return Grid.from_spacing(g.L, g.h, g.dimension)
        return Grid.uniform(g.L, g.n, g.dimension)


_SECTION_TYPES = {
    "model": ModelSection, "grid": GridSection, "solver": SolverSection,
    "horizon": HorizonSection, "nplayer": NplayerSection, "output": OutputSection,
}


def _section(name: str, raw) -> object:
    cls = _SECTION_TYPES[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {unknown}")
    return cls(**raw)


def _positive(value, what: str, integer: bool = False) -> None:
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
    if integer:
        ok = ok and float(value).is_integer()
    if not ok:
        raise ConfigError(f"{what} must be a positive {'integer' if integer else 'number'}, got {value!r}")


def _check(cfg: RunConfig) -> None:
    m = cfg.model
    if m.name not in BUILTIN_MODELS:
        raise ConfigError(f"unknown model {m.name!r}; choose from {sorted(BUILTIN_MODELS)}")
    if not isinstance(m.params, dict):
        raise ConfigError("model.params must be a mapping")
    allowed = set(inspect.signature(BUILTIN_MODELS[m.name]).parameters)
    unknown = sorted(set(m.params) - allowed)
    if unknown:
        raise ConfigError(f"unknown parameter(s) for model {m.name!r}: {unknown}")

    g = cfg.grid
    _positive(g.L, "grid.L")
    if g.n is not None and g.h is not None:
        raise ConfigError("grid takes exactly one of 'n' (nodes per axis) or 'h' (spacing)")
    if g.n is None and g.h is None:
        g.h = DEFAULT_SPACING
    if g.h is not None:
        _positive(g.h, "grid.h")
    else:
        _positive(g.n, "grid.n", integer=True)
    if g.dimension not in (1, 2):
        raise ConfigError(f"grid.dimension must be 1 or 2, got {g.dimension!r}")

    s = cfg.solver
    _positive(s.damping, "solver.damping")
    if s.damping > 1:
        raise ConfigError("solver.damping must lie in (0, 1]")
    _positive(s.tol, "solver.tol")
    _positive(s.max_iters, "solver.max_iters", integer=True)
    _positive(s.n_probe, "solver.n_probe", integer=True)
    if s.mode not in ("picard", "fictitious_play"):
        raise ConfigError(f"solver.mode must be 'picard' or 'fictitious_play', got {s.mode!r}")
    if not isinstance(s.init, list) or not s.init:
        raise ConfigError("solver.init must be a non-empty list of starting points")

    h = cfg.horizon
    for T in h.T:
        _positive(T, "horizon.T entries")
    _positive(h.dt, "horizon.dt")
    _positive(h.t0, "horizon.t0")
    _positive(h.damping, "horizon.damping")
    _positive(h.tol, "horizon.tol")
    _positive(h.max_iters, "horizon.max_iters", integer=True)
    for lam in h.lambdas:
        if not isinstance(lam, (int, float)) or not 0 <= lam < 1:
            raise ConfigError(f"horizon.lambdas entries must lie in [0, 1), got {lam!r}")
    if h.phi0 not in ("zero", "stationary"):
        raise ConfigError("horizon.phi0 must be 'zero' or 'stationary'")

    p = cfg.nplayer
    for N in p.N:
        if not isinstance(N, int) or N < 2:
            raise ConfigError(f"nplayer.N entries must be integers >= 2, got {N!r}")
    if p.mode not in ("exact_moment", "monte_carlo"):
        raise ConfigError(f"nplayer.mode must be 'exact_moment' or 'monte_carlo', got {p.mode!r}")
    for key in ("n_mc", "particles_N"):
        _positive(getattr(p, key), f"nplayer.{key}", integer=True)
    for key in ("window", "T_sim", "dt_sim"):
        _positive(getattr(p, key), f"nplayer.{key}")

    _positive(cfg.output.stride, "output.stride", integer=True)


def parse_config(raw) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a parsed YAML mapping."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level of the config must be a mapping")
    unknown = sorted(set(raw) - set(_SECTION_TYPES))
    if unknown:
        raise ConfigError(f"unknown section(s): {unknown}")
    try:
        cfg = RunConfig(**{name: _section(name, raw.get(name)) for name in _SECTION_TYPES})
        _check(cfg)
        cfg.build_grid()
        cfg.build_spec()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def builtin_config_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("ergodic_mfg.configs").iterdir()
                  if p.name.endswith(".yaml"))


def load_config(source) -> RunConfig:
    """Load a config from a YAML file path or a built-in config name."""
    path = Path(source)
    if not path.exists() and str(source) in builtin_config_names():
        text = resources.files("ergodic_mfg.configs").joinpath(f"{source}.yaml").read_text("utf-8")
    else:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!s}: {exc}", code="IO_ERROR") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {source!s}: {exc}", code="CONFIG_PARSE") from exc
    return parse_config(raw)
