"""YAML run configuration.

Schema (unknown keys are rejected everywhere)::

    seed: 1                      # master seed (default 0; --seed overrides)
    M: 100                       # replications (alias: replications)
    threads: 1                   # advisory worker count
    estimators: [RV, VHatPrime, "GeneralG:x3", "UStat:2c"]
    target_span: covered         # covered | full
    bias_factor: 1.0             # GeneralG correction (bias_factor / k_n) g'' c^2
    model:
      drift: 0.0
      volatility: {kind: constant, c: 1.0}
      #           {kind: sinusoid, base: 2, amplitude: 1, period: 1}
      #           {kind: heston, kappa: 3, theta: 1, xi: 0.5, rho: -0.5, c0: 1}
    sampling: {t: 1.0, n: 4096, substeps: 1}   # substeps default: 10 heston, else 1
    kn_rule: {theta: 1.0, gamma: 0.4}          # 1/3 < gamma < 1/2
    ci: {alpha: 0.05, plugin: VHatPrime}       # plugin may be "oracle"
    output: {dir: out, histogram: false, qq: false, samples: false}

Only ``model`` and ``sampling`` are required.
"""

from __future__ import annotations

from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .estimators import EstimatorConfig
from .mc_harness import DEFAULT_ESTIMATORS, KnRule, McConfig
from .process_sim import ConstantVol, HestonVol, ModelSpec, SamplingSpec, SinusoidVol


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ConstantSection(_Strict):
    kind: Literal["constant"]
    c: float = Field(ge=0)


class SinusoidSection(_Strict):
    kind: Literal["sinusoid"]
    base: float
    amplitude: float
    period: float = Field(gt=0)


class HestonSection(_Strict):
    kind: Literal["heston"]
    kappa: float = Field(gt=0)
    theta: float = Field(gt=0)
    xi: float = Field(gt=0)
    rho: float = Field(ge=-1, le=1)
    c0: float = Field(gt=0)


class ModelSection(_Strict):
    drift: float = 0.0
    volatility: Union[ConstantSection, SinusoidSection, HestonSection] = Field(
        discriminator="kind"
    )


class SamplingSection(_Strict):
    t: float = Field(gt=0)
    n: int = Field(ge=2)
    substeps: Optional[int] = Field(default=None, ge=1)


class KnRuleSection(_Strict):
    theta: float = Field(default=1.0, gt=0)
    gamma: float = 0.4

    @field_validator("gamma")
    @classmethod
    def _rate_condition(cls, v: float) -> float:
        if not 1.0 / 3.0 < v < 0.5:
            raise ValueError(f"rate condition violated: gamma={v} must lie in (1/3, 1/2)")
        return v


class CiSection(_Strict):
    alpha: float = Field(default=0.05, gt=0, le=1)
    plugin: str = "VHatPrime"


class OutputSection(_Strict):
    dir: str = "out"
    histogram: bool = False
    qq: bool = False
    samples: bool = False


class RunConfig(_Strict):
    model: ModelSection
    sampling: SamplingSection
    seed: int = Field(default=0, ge=0, lt=2**64)
    replications: int = Field(default=100, ge=1, alias="M")
    threads: int = Field(default=1, ge=1)
    estimators: List[str] = Field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    target_span: Literal["covered", "full"] = "covered"
    bias_factor: float = 1.0
    kn_rule: KnRuleSection = Field(default_factory=KnRuleSection)
    ci: CiSection = Field(default_factory=CiSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @field_validator("estimators")
    @classmethod
    def _known_estimators(cls, v: List[str]) -> List[str]:
        for label in v:
            EstimatorConfig.from_label(label, k_n=2)
        return v

    def model_spec(self) -> ModelSpec:
        vol = self.model.volatility
        params = vol.model_dump(exclude={"kind"})
        kinds = {"constant": ConstantVol, "sinusoid": SinusoidVol, "heston": HestonVol}
        return ModelSpec(volatility=kinds[vol.kind](**params), drift=self.model.drift)

    def sampling_spec(self) -> SamplingSpec:
        s = self.sampling.substeps
        if s is None:
            s = self.model_spec().default_substeps
        return SamplingSpec(t=self.sampling.t, n=self.sampling.n, substeps=s)

    @property
    def k_n(self) -> int:
        return KnRule(self.kn_rule.theta, self.kn_rule.gamma).k_n(self.sampling.n)

    def mc_config(self, seed: Optional[int] = None, threads: Optional[int] = None) -> McConfig:
        try:
            return McConfig(
                model=self.model_spec(),
                sampling=self.sampling_spec(),
                kn_rule=KnRule(self.kn_rule.theta, self.kn_rule.gamma),
                estimators=tuple(self.estimators),
                replications=self.replications,
                seed=self.seed if seed is None else seed,
                threads=self.threads if threads is None else threads,
                target_span=self.target_span,
                bias_factor=self.bias_factor,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc
    try:
        cfg.model_spec().validate()
        cfg.sampling_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
