"""Scenario configuration: strict JSON parsed with pydantic, unknown keys rejected."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .angles import AngleSeries, ConstantAngle, EndpointAngles
from .geometry import DomainGeometry, Interval, StarShaped

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _check_angle(value: float) -> float:
    if not 0.0 < value < np.pi:
        raise ValueError(f"θ must lie strictly inside (0, π); got {value}")
    return value


# ---------------------------------------------------------------- domain

class IntervalDomain(_Strict):
    kind: Literal["interval"]
    a: float = -1.0
    b: float = 1.0
    n: int = 201

    def to_spec(self, level: int = 0) -> Interval:
        """Grid at ``2**level`` times the configured resolution (negative levels coarsen)."""
        return Interval(self.a, self.b, _scaled(self.n - 1, level, "domain.n - 1") + 1)


class StarDomain(_Strict):
    kind: Literal["star"]
    rho_cos: list[float] = Field(min_length=1)
    rho_sin: list[float] = []
    nr: int = 16
    ntheta: Optional[int] = None
    rho_min: float = 0.0

    def to_spec(self, level: int = 0) -> StarShaped:
        """Grid at ``2**level`` times the configured resolution (negative levels coarsen)."""
        nt = None if self.ntheta is None else _scaled(self.ntheta, level, "domain.ntheta")
        return StarShaped(tuple(self.rho_cos), tuple(self.rho_sin), _scaled(self.nr, level, "domain.nr"), nt,
                          self.rho_min)


def _scaled(n: int, level: int, what: str) -> int:
    if level >= 0:
        return n * 2**level
    f = 2**-level
    if n % f or n // f < 2:
        raise ConfigError(f"{what}: {n} cannot be halved {-level} times")
    return n // f


Domain = Annotated[Union[IntervalDomain, StarDomain], Field(discriminator="kind")]


# ---------------------------------------------------------------- angles

class ThetaConstant(_Strict):
    kind: Literal["constant"]
    value: float

    @field_validator("value")
    @classmethod
    def _in_range(cls, v):
        return _check_angle(v)

    def to_spec(self):
        return ConstantAngle(self.value)


class ThetaEndpoints(_Strict):
    kind: Literal["endpoints"]
    left: float
    right: float

    @field_validator("left", "right")
    @classmethod
    def _in_range(cls, v):
        return _check_angle(v)

    def to_spec(self):
        return EndpointAngles(self.left, self.right)


class ThetaSeries(_Strict):
    kind: Literal["series"]
    mean: float
    cos: list[float] = []
    sin: list[float] = []

    def to_spec(self):
        return AngleSeries(self.mean, tuple(self.cos), tuple(self.sin))


Theta = Annotated[Union[ThetaConstant, ThetaEndpoints, ThetaSeries], Field(discriminator="kind")]


# ---------------------------------------------------------------- run settings

class InitialData(_Strict):
    family: Literal["zero", "constant", "paraboloid", "bump", "random-smooth", "grim-reaper", "cap"] = "zero"
    amplitude: float = 0.0
    width: float = 0.5
    modes: int = 3
    speed: Optional[float] = None


class Scheme(_Strict):
    scheme: Literal["explicit", "semi-implicit"] = "explicit"
    cfl: float = Field(0.5, gt=0.0, le=1.0)
    dt: Optional[float] = Field(None, gt=0.0)
    record_every: int = Field(100, ge=1)
    linear_solver: Literal["direct", "bicgstab"] = "direct"
    linear_tol: float = Field(1e-10, gt=0.0)
    max_steps: Optional[int] = Field(None, ge=1)


class Tolerances(_Strict):
    eps_stat: float = Field(1e-7, gt=0.0)
    eps_tw: float = Field(1e-6, gt=0.0)
    newton_tol: Optional[float] = Field(None, gt=0.0)
    newton_max_iter: int = Field(50, ge=1)
    bc_tol: float = Field(1e-10, gt=0.0)
    tau_ii: float = 0.1
    tau_iii: float = 3.0
    flux_K: float = Field(1.0, gt=0.0)
    min_order: float = 1.5


class Output(_Strict):
    directory: Optional[str] = None
    snapshots: bool = True


class Sweep(_Strict):
    parameter: Literal["A", "theta-offset"] = "A"
    values: list[float] = Field(min_length=1)


class Refine(_Strict):
    levels: int = Field(3, ge=2)


class Comparison(_Strict):
    pairs: int = Field(20, ge=1)
    max_gap: float = Field(0.01, ge=0.0)


class TranslatorOptions(_Strict):
    uniqueness_k: int = Field(5, ge=0)
    uniqueness_amplitude: float = 1.0


class ScenarioConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    domain: Domain
    theta: Theta
    A: float = 0.0
    initial: InitialData = InitialData()
    scheme: Scheme = Scheme()
    horizon: float = Field(1.0, gt=0.0)
    horizon_diffusion_times: Optional[float] = Field(None, gt=0.0)
    stop_rules: bool = True
    tolerances: Tolerances = Tolerances()
    output: Output = Output()
    seed: int = 0
    sweep: Optional[Sweep] = None
    refine: Optional[Refine] = None
    comparison: Optional[Comparison] = None
    translator: TranslatorOptions = TranslatorOptions()

    @model_validator(mode="after")
    def _version(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        return self

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def horizon_for(self, geom: DomainGeometry) -> float:
        """Horizon in time units; diffusion times are ``rho_min^2`` each."""
        if self.horizon_diffusion_times is not None:
            return self.horizon_diffusion_times * geom.rho_min**2
        return self.horizon


# ---------------------------------------------------------------- loading

def builtin_scenarios() -> list[str]:
    root = resources.files("cylflow") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read(source: str | Path) -> dict:
    path = Path(source)
    if not path.exists() and str(source) in builtin_scenarios():
        text = (resources.files("cylflow") / "scenarios" / f"{source}.json").read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        lines.append(f"{loc}: {msg}")
    return "; ".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc


def load_config(source: str | Path) -> ScenarioConfig:
    """Parse a config file path or the name of a built-in scenario."""
    return parse_config(_read(source))


# ---------------------------------------------------------------- initial data

def initial_data(cfg: ScenarioConfig, geom: DomainGeometry, rng: np.random.Generator | None = None) -> np.ndarray:
    """Evaluate the configured analytic family on the grid nodes.

    ``random-smooth`` draws modes that already satisfy a zero normal slope
    (on an interval or a disk): ``cos(k pi s)`` in 1D and
    ``r^m - m r^{m+2}/(m+2)`` times a random phase in 2D.
    """
    ini = cfg.initial
    x, y = np.asarray(geom.x), np.asarray(geom.y)
    if ini.family == "zero":
        return np.zeros(geom.shape)
    if ini.family == "constant":
        return np.full(geom.shape, ini.amplitude)
    if ini.family == "paraboloid":
        return ini.amplitude * (x**2 + y**2)
    if ini.family == "bump":
        return ini.amplitude * np.exp(-(x**2 + y**2) / ini.width**2)
    if ini.family == "grim-reaper":
        from .translators import grim_reaper_profile

        return grim_reaper_profile(x, ini.speed if ini.speed is not None else 0.0)
    if ini.family == "cap":
        from .translators import cap_profile

        return cap_profile(np.hypot(x, y), cfg.A)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    return random_smooth(geom, rng, ini.amplitude or 0.3, ini.modes)


def random_smooth(geom: DomainGeometry, rng: np.random.Generator, amplitude: float = 0.3,
                  modes: int = 3) -> np.ndarray:
    if geom.dim == 1:
        a, b = geom.spec.a, geom.spec.b
        s = (np.asarray(geom.x) - a) / (b - a)
        u = np.zeros(geom.shape)
        for k in range(1, modes + 1):
            u += rng.uniform(-amplitude, amplitude) * np.cos(k * np.pi * s)
        return u
    # radial coordinate scaled by rho(eta) so the mode shape follows the grid
    xi = np.asarray(geom.xi)[:, None] * np.ones(geom.ntheta)
    eta = np.ones(geom.nr + 1)[:, None] * np.asarray(geom.eta)
    u = rng.uniform(-amplitude, amplitude) * (xi**2 - xi**4 / 2)
    for m in range(1, modes + 1):
        a, ph = rng.uniform(-amplitude, amplitude), rng.uniform(0, 2 * np.pi)
        u += a * (xi**m - m * xi ** (m + 2) / (m + 2)) * np.cos(m * eta + ph)
    u[0] = u[0, 0]
    return u
