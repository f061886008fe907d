"""Run configuration: a sectioned ``key = value`` file, validated before any allocation."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .fem import MaterialModel
from .optimizer import Continuation, ProblemSpec
from . import problems

GEOMETRIES = ("two_bar_frame", "rectangle", "column", "notched_plate", "thin_bar")


@dataclass
class GeometryConfig:
    kind: str = "two_bar_frame"
    nelx: int = 84
    nely: int = 36
    Lx: float = problems.TWO_BAR_LX
    F: float = 2e-2
    h: float = 1.0
    clamp: str = "left"
    load: str = "tip"

    def __post_init__(self):
        if self.kind not in GEOMETRIES:
            raise ConfigError(f"unknown geometry {self.kind!r}; expected one of {GEOMETRIES}")
        if self.nelx < 2 or self.nely < 2:
            raise ConfigError("grid needs at least 2 x 2 elements")
        if self.Lx <= 0 or self.h <= 0 or self.F == 0:
            raise ConfigError("Lx and h must be positive and F nonzero")

    def build(self) -> problems.Structure:
        if self.kind == "two_bar_frame":
            return problems.two_bar_frame(self.nelx, self.nely, self.Lx, self.F)
        if self.kind == "column":
            return problems.cantilever_column(self.nelx, self.nely, width=self.nelx * self.h, P=self.F)
        if self.kind == "notched_plate":
            return problems.notched_plate(self.nelx, self.nely, F=self.F)
        if self.kind == "thin_bar":
            return problems.thin_bar_frame(self.nelx, self.nely, F=self.F)
        return problems.rectangle(self.nelx, self.nely, self.h, self.clamp, self.load, self.F)


@dataclass
class AnalysisConfig:
    ell: int = 2
    q: int = 12
    sweeps: int = 3
    mg_levels: int = 0
    tol: float = 1e-5
    x_bar: float = 0.9
    locality_factor: float = 10.0
    r_th: float = 1.5
    final: str = "diagonal"

    def __post_init__(self):
        if self.ell < 1 or self.q < 1 or self.sweeps < 0 or self.mg_levels < 0:
            raise ConfigError("ell, q must be >= 1; sweeps, mg_levels >= 0")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if not 0 < self.x_bar <= 1:
            raise ConfigError("x_bar must lie in (0, 1]")
        if self.final not in ("diagonal", "ritz"):
            raise ConfigError("final must be 'diagonal' or 'ritz'")


@dataclass
class OutputConfig:
    dir: str = "out"
    checkpoint_every: int = 25
    snapshot_every: int = 0

    def __post_init__(self):
        if self.checkpoint_every < 0 or self.snapshot_every < 0:
            raise ConfigError("output intervals must be non-negative")


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    material: MaterialModel = field(default_factory=MaterialModel)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0


_SECTIONS = {
    "geometry": GeometryConfig,
    "material": MaterialModel,
    "problem": ProblemSpec,
    "continuation": Continuation,
    "analysis": AnalysisConfig,
    "output": OutputConfig,
}


def _convert(cls, key, raw):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields or key == "continuation":
        raise ConfigError(f"unknown key {key!r} in [{_section_name(cls)}]")
    default = fields[key].default
    typ = type(default) if default is not dataclasses.MISSING else str
    try:
        if typ is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key}: {exc}") from None


def _section_name(cls):
    return next(k for k, v in _SECTIONS.items() if v is cls)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    values = {name: {} for name in _SECTIONS}
    seed = 0
    for section in cp.sections():
        if section == "run":
            for key, raw in cp.items(section):
                if key != "seed":
                    raise ConfigError(f"unknown key {key!r} in [run]")
                seed = int(raw)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = _SECTIONS[section]
        for key, raw in cp.items(section):
            values[section][key] = _convert(cls, key, raw)
    try:
        cont = Continuation(**values["continuation"])
        problem = ProblemSpec(**values["problem"], continuation=cont)
        mat_kw = dict(values["material"])
        mat_kw.setdefault("p", cont.p_start)
        return RunConfig(GeometryConfig(**values["geometry"]), MaterialModel(**mat_kw), problem,
                         AnalysisConfig(**values["analysis"]), OutputConfig(**values["output"]), seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (every key written explicitly)."""
    out = []
    for name, obj in (("geometry", cfg.geometry), ("material", cfg.material), ("problem", cfg.problem),
                      ("continuation", cfg.problem.continuation), ("analysis", cfg.analysis),
                      ("output", cfg.output)):
        out.append(f"[{name}]")
        for f in dataclasses.fields(obj):
            if f.name == "continuation":
                continue
            out.append(f"{f.name} = {getattr(obj, f.name)}")
        out.append("")
    out += ["[run]", f"seed = {cfg.seed}", ""]
    return "\n".join(out)
