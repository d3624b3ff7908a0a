"""TOML scenario files.

A scenario is a set of tables (``plant``, ``observer``, ``controller``,
``sampling``, ``simulation``, ``initial``, ``signals``, optional ``design``,
``predict``, ``sweep``, ``output``); unknown keys are rejected.  Files are
read with :mod:`tomllib`/:mod:`tomli` and written with :mod:`tomli_w`.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import InvalidArgument
from .plant import catalog_names
from .signals import ExogenousSignal
from .simulator import SimConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlantSection(_Section):
    name: str = "example4"
    r: Optional[float] = Field(default=None, ge=0)
    tau: Optional[float] = Field(default=None, ge=0)

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in catalog_names():
            raise ValueError(f"unknown plant {v!r}; expected one of {catalog_names()}")
        return v


class ObserverSection(_Section):
    p: list[float] = Field(default_factory=lambda: [-3.0, -3.0])
    theta: float = Field(default=1.0, ge=1)


class ControllerSection(_Section):
    k: list[float] = Field(default_factory=lambda: [-15.0, -8.0])
    predictor: Literal["approx", "exact"] = "approx"
    l: int = Field(default=1, ge=1)
    m: int = Field(default=2, ge=1)
    n_q: int = Field(default=256, ge=2)

    @field_validator("n_q")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("n_q must be even")
        return v


class SamplingSection(_Section):
    T1: float = Field(default=0.03, gt=0)
    T2: float = Field(default=0.01, gt=0)


class SimulationSection(_Section):
    t_end: float = Field(default=40.0, gt=0)
    h: float = Field(default=1e-3, gt=0)
    seed: int = 0
    monitors: bool = True
    K: Optional[float] = Field(default=None, ge=0)


class InputHistory(_Section):
    starts: list[float]
    values: list[float]

    @model_validator(mode="after")
    def _match(self):
        if not self.starts or len(self.starts) != len(self.values):
            raise ValueError("u0 needs matching, non-empty starts and values")
        return self


class InitialSection(_Section):
    x0: list[float] = Field(default_factory=lambda: [1.0, 1.0])
    u0: Union[float, InputHistory] = -2.0
    z0: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    w0: float = 0.0


class SignalSpec(_Section):
    kind: Literal["zero", "constant", "sinusoid", "piecewise", "noise"] = "zero"
    value: Optional[float] = None
    amplitude: Optional[float] = None
    frequency: Optional[float] = None
    phase: Optional[float] = None
    offset: Optional[float] = None
    times: Optional[list[float]] = None
    values: Optional[list[float]] = None
    seed: Optional[int] = None
    cell: Optional[float] = Field(default=None, gt=0)

    def to_signal(self) -> ExogenousSignal:
        data = self.model_dump(exclude_none=True)
        return ExogenousSignal.from_dict(data)

    @classmethod
    def from_signal(cls, sig: ExogenousSignal) -> "SignalSpec":
        return cls(**sig.to_dict())


class SignalsSection(_Section):
    d: SignalSpec = Field(default_factory=SignalSpec)
    d_dir: Optional[list[float]] = None
    xi: SignalSpec = Field(default_factory=SignalSpec)
    b: SignalSpec = Field(default_factory=SignalSpec)


class DesignSection(_Section):
    q: float = Field(default=1.0, gt=0)
    s: float = Field(default=1.0, gt=0)
    K: Optional[float] = Field(default=None, ge=0)
    grid_points: int = Field(default=4096, ge=16)


class PredictSection(_Section):
    state: Optional[list[float]] = None
    mode: Literal["approx", "exact"] = "approx"


class SweepSection(_Section):
    axes: dict[str, list[float]] = Field(default_factory=dict)
    criterion: Literal["auto", "decay", "bounded"] = "auto"
    bound: Optional[float] = Field(default=None, gt=0)
    conditions: bool = True


class OutputSection(_Section):
    trace: Optional[str] = None
    sweep: Optional[str] = None


class ScenarioFile(_Section):
    name: str = "scenario"
    description: str = ""
    plant: PlantSection = Field(default_factory=PlantSection)
    observer: ObserverSection = Field(default_factory=ObserverSection)
    controller: ControllerSection = Field(default_factory=ControllerSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    initial: InitialSection = Field(default_factory=InitialSection)
    signals: SignalsSection = Field(default_factory=SignalsSection)
    design: DesignSection = Field(default_factory=DesignSection)
    predict: PredictSection = Field(default_factory=PredictSection)
    sweep: Optional[SweepSection] = None
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _h_resolves_events(self):
        s = self.sampling
        if self.simulation.h > min(s.T1, s.T2) / 4.0 * (1 + 1e-12):
            raise ValueError("simulation.h must not exceed min(T1, T2)/4")
        return self

    # conversion -----------------------------------------------------------
    def to_sim_config(self) -> SimConfig:
        u0 = self.initial.u0
        if isinstance(u0, InputHistory):
            u0 = (tuple(u0.starts), tuple(u0.values))
        sig = self.signals
        try:
            return SimConfig(
                plant=self.plant.name, r=self.plant.r, tau=self.plant.tau,
                p=tuple(self.observer.p), theta=self.observer.theta,
                k=tuple(self.controller.k), predictor=self.controller.predictor,
                l=self.controller.l, m=self.controller.m, n_q=self.controller.n_q,
                T1=self.sampling.T1, T2=self.sampling.T2,
                t_end=self.simulation.t_end, h=self.simulation.h,
                x0=tuple(self.initial.x0), u0=u0, z0=tuple(self.initial.z0), w0=self.initial.w0,
                d=sig.d.to_signal(), d_dir=None if sig.d_dir is None else tuple(sig.d_dir),
                xi=sig.xi.to_signal(), b=sig.b.to_signal(),
                monitors=self.simulation.monitors, K=self.simulation.K, seed=self.simulation.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(str(exc)) from None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.model_dump(exclude_none=True))


def parse_scenario(text: str) -> ScenarioFile:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgument(f"invalid TOML: {exc}") from None
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise InvalidArgument(f"invalid scenario: {exc}") from None


def load_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidArgument(f"cannot read {path}: {exc}") from None
    return parse_scenario(text)


def dump_scenario(sc: ScenarioFile, path=None) -> str:
    text = sc.to_toml()
    if path is not None:
        Path(path).write_text(text)
    return text


def shipped_scenarios() -> list[str]:
    root = resources.files("predictorlab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def shipped_scenario(name: str) -> ScenarioFile:
    """Load one of the scenarios bundled with the package (``example4``, ...)."""
    res = resources.files("predictorlab") / "scenarios" / f"{name}.toml"
    if not res.is_file():
        raise InvalidArgument(f"no shipped scenario {name!r}; available: {shipped_scenarios()}")
    return parse_scenario(res.read_text())
