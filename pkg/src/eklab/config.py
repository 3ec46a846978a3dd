"""Experiment configuration: TOML file -> validated, defaults-filled ExperimentConfig."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, SaddleConditionError
from .model import Endstate, ModelSpec, make_model, saddle_check


def _power_of_two(name, v, minimum=4):
    if v is not None and (v < minimum or v & (v - 1)):
        raise ValueError(f"{name} must be a power of two >= {minimum}, got {v}")
    return v


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelBlock(_Block):
    kind: str = "madelung"
    params: List[float] = Field(default_factory=lambda: [1.0, 1.0])


class EndstateBlock(_Block):
    rho_inf: float = Field(1.0, gt=0)
    u_inf: float = 0.0


class WaveBlock(_Block):
    speed: float


class GridBlock(_Block):
    """Profile grid; half_length defaults to the truncation-tolerance choice."""
    n: int = 1024
    half_length: Optional[float] = Field(None, gt=0)
    tol: float = Field(1e-12, gt=0, lt=1)

    @field_validator("n")
    @classmethod
    def _n(cls, v):
        return _power_of_two("grid.n", v, 64)


class SpectrumBlock(_Block):
    n: int = 512
    refine_n: int = 1024
    samples: int = Field(64, ge=3)
    k_min: float = Field(0.0, ge=0)
    k_max: Optional[float] = Field(None, gt=0)
    rel_tol: float = Field(1e-4, gt=0)
    m_form: Literal["rederived", "literal"] = "rederived"

    @field_validator("n", "refine_n")
    @classmethod
    def _n(cls, v, info):
        return _power_of_two(f"spectrum.{info.field_name}", v, 64)


class HypothesesBlock(_Block):
    probes: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    xi_max: float = Field(20.0, gt=0)
    n_xi: int = Field(4001, ge=3)
    n_random: int = Field(10, ge=1)


class EvolutionBlock(_Block):
    n: int = 256
    gamma_factor: float = Field(1.2, gt=1)
    decay: int = Field(1, ge=0)
    s: int = Field(1, ge=0)
    resolvent_t: float = Field(20.0, gt=0)
    growth_t: float = Field(10.0, gt=0)
    wavepacket_t: float = Field(10.0, gt=0)
    torus_multiple: int = Field(12, ge=1)
    ny: int = 64
    v2_dt: float = Field(0.1, gt=0)
    v2: bool = True

    @field_validator("n", "ny")
    @classmethod
    def _n(cls, v, info):
        return _power_of_two(f"evolution.{info.field_name}", v, 8)


class SimulationBlock(_Block):
    nx: int = 256
    ny: int = 32
    half_length: float = Field(14.0, gt=0)
    torus_multiple: int = Field(1, ge=1)
    eps: List[float] = Field(default_factory=lambda: [1e-3, 3e-4, 1e-4])
    kappa: float = 0.1
    dt: Optional[float] = Field(None, gt=0)
    t_cap: Optional[float] = Field(None, gt=0)
    delta_stop: Optional[float] = Field(None, gt=0)
    diag_every: float = Field(0.1, gt=0)
    madelung_s: int = Field(1, ge=0)
    steady_t: float = Field(10.0, gt=0)
    linearization_nx: int = 512
    linearization_eta: float = Field(1e-6, gt=0)
    snapshots: bool = False

    @field_validator("nx", "ny", "linearization_nx")
    @classmethod
    def _n(cls, v, info):
        return _power_of_two(f"simulation.{info.field_name}", v, 4)

    @model_validator(mode="after")
    def _eps_kappa(self):
        if not 0 < self.kappa < 1:
            raise ValueError(f"simulation.kappa = {self.kappa} must lie in (0, 1)")
        for e in self.eps:
            if not 0 < e < self.kappa:
                raise ValueError(f"simulation.eps entry {e} violates 0 < eps < kappa = {self.kappa}")
        return self


class OutputBlock(_Block):
    dir: str = "out"


class AcceptanceBlock(_Block):
    criteria: List[int] = Field(default_factory=lambda: list(range(1, 15)))
    companion: ModelBlock = Field(default_factory=lambda: ModelBlock(kind="constant_k", params=[1.0, 1.0]))

    @field_validator("criteria")
    @classmethod
    def _ids(cls, v):
        bad = [c for c in v if not 1 <= c <= 14]
        if bad:
            raise ValueError(f"acceptance.criteria ids must lie in 1..14, got {bad}")
        return v


class ExperimentConfig(_Block):
    model: ModelBlock
    wave: WaveBlock
    endstate: EndstateBlock = EndstateBlock()
    grid: GridBlock = GridBlock()
    spectrum: SpectrumBlock = SpectrumBlock()
    hypotheses: HypothesesBlock = HypothesesBlock()
    evolution: EvolutionBlock = EvolutionBlock()
    simulation: SimulationBlock = SimulationBlock()
    output: OutputBlock = OutputBlock()
    acceptance: AcceptanceBlock = AcceptanceBlock()
    seed: int = 0

    def build_model(self) -> ModelSpec:
        return make_model(self.model.kind, self.model.params)

    def build_companion(self) -> ModelSpec:
        return make_model(self.acceptance.companion.kind, self.acceptance.companion.params)

    def build_endstate(self) -> Endstate:
        return Endstate(self.endstate.rho_inf, self.endstate.u_inf, self.wave.speed)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        text = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown key '{key}'")
        else:
            parts.append(f"{key}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: dict, source: str = "<dict>") -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from None
    try:
        model = cfg.build_model()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    holds, margin = saddle_check(model, cfg.build_endstate())
    if not holds:
        raise SaddleConditionError(
            f"{source}: saddle condition rho_inf g0'(rho_inf) > (u_inf - c)^2 fails (margin {margin:.6g}); "
            "no soliton for wave.speed = {}".format(cfg.wave.speed))
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return parse_config(data, str(path))
