"""Strict JSON experiment configuration.

Example::

    {
      "model": {"kind": "langevin", "theta": -6, "kappa": -5, "g": 1, "sigma": 0.456},
      "sim": {"dt": 0.001, "horizon": 2, "n_paths": 1000, "seed": 7, "x0": 3,
              "absorb_threshold": 0.2},
      "output_dir": "out"
    }

Model kinds: ``abm`` / ``gbm`` (mu, sigma), ``langevin`` or its alias ``qed``
(theta, kappa, g, sigma) and ``micro`` (r_f, c, u_bar, phi, lambda, mu_impact,
sigma, signal_offset). Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .models import ABM, GBM, Langevin, Micro, ModelSpec
from .potential import QuarticPotential
from .simulate import SimConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AbmModel(_Strict):
    kind: Literal["abm"]
    mu: float
    sigma: float = Field(ge=0)

    def build(self) -> ModelSpec:
        return ABM(self.mu, self.sigma)


class GbmModel(_Strict):
    kind: Literal["gbm"]
    mu: float
    sigma: float = Field(ge=0)

    def build(self) -> ModelSpec:
        return GBM(self.mu, self.sigma)


class LangevinModel(_Strict):
    kind: Literal["langevin", "qed"]
    theta: float
    kappa: float = 0.0
    g: float = 0.0
    sigma: float = Field(ge=0)

    def build(self) -> ModelSpec:
        return Langevin(QuarticPotential(self.theta, self.kappa, self.g), self.sigma)


class MicroModel(_Strict):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    kind: Literal["micro"]
    r_f: float
    c: float
    u_bar: float
    phi: float
    lam: float = Field(alias="lambda")
    mu_impact: float
    sigma: float = Field(ge=0)
    signal_offset: float = 0.0

    def build(self) -> ModelSpec:
        return Micro(self.r_f, self.c, self.u_bar, self.phi, self.lam, self.mu_impact,
                     self.sigma, self.signal_offset)


ModelConfig = Annotated[Union[AbmModel, GbmModel, LangevinModel, MicroModel],
                        Field(discriminator="kind")]


class SimSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    horizon: float = Field(1.0, gt=0)
    n_paths: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    x0: float = 1.0
    absorb_threshold: float = Field(0.0, ge=0)
    record_every: int = Field(1, ge=1)
    crossing_level: Optional[float] = None
    binary: bool = False

    def build(self) -> SimConfig:
        return SimConfig(dt=self.dt, horizon=self.horizon, n_paths=self.n_paths,
                         master_seed=self.seed, x0=self.x0,
                         absorb_threshold=self.absorb_threshold,
                         record_every=self.record_every, crossing_level=self.crossing_level)


class PotentialSection(_Strict):
    x_range: Optional[tuple[float, float]] = None
    points: int = Field(801, ge=3)
    tol: float = Field(1e-9, gt=0)


class DefaultSection(_Strict):
    sigma_grid: list[float] = Field(default_factory=lambda: [0.0, 0.3, 0.4, 0.5])
    horizon_grid: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])

    @model_validator(mode="after")
    def _check(self):
        if not self.sigma_grid or not self.horizon_grid:
            raise ValueError("sigma_grid and horizon_grid must be non-empty")
        if any(s < 0 for s in self.sigma_grid) or any(h <= 0 for h in self.horizon_grid):
            raise ValueError("sigma values must be >= 0 and horizons > 0")
        return self


class InstantonSection(_Strict):
    kind: Literal["instanton", "anti_instanton", "bounce", "all"] = "all"
    t_span: tuple[float, float] = (0.0, 500.0)
    ode_tol: float = Field(1e-8, gt=0)
    well: Optional[float] = None


class CalibrateSection(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    init_params: Optional[list[tuple[float, float, float, float]]] = None
    bounds: Optional[tuple[tuple[float, float], tuple[float, float],
                           tuple[float, float], tuple[float, float]]] = None
    opt_tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(20000, ge=1)


class AnalysisSection(_Strict):
    moments: bool = True
    default_probability: bool = True
    histogram_window: Optional[tuple[float, float]] = None
    histogram_bins: int = Field(40, ge=1)


DEFAULT_MODEL = {"kind": "langevin", "theta": -6.0, "kappa": -5.0, "g": 1.0, "sigma": 0.456}


class ExperimentConfig(_Strict):
    model: ModelConfig = Field(default_factory=lambda: LangevinModel(**DEFAULT_MODEL))
    sim: SimSection = Field(default_factory=SimSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    potential: PotentialSection = Field(default_factory=PotentialSection)
    default: DefaultSection = Field(default_factory=DefaultSection)
    instanton: InstantonSection = Field(default_factory=InstantonSection)
    calibrate: CalibrateSection = Field(default_factory=CalibrateSection)
    output_dir: str = "qedlab_out"
    plot: bool = True


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate; ``overrides`` maps dotted keys (e.g. ``sim.seed``) to values."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    for key, value in (overrides or {}).items():
        node = raw
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {key}: {part} is not an object")
        node[leaf] = value
    try:
        cfg = ExperimentConfig.model_validate(raw)
        cfg.sim.build()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
