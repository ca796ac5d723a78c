"""Experiment configuration: one JSON document per run.

All fields are validated with pydantic; unknown keys are rejected so that a
typo never silently falls back to a default.  :func:`load_config` converts
every failure into :class:`~markov_ldp.errors.ConfigInvalid`.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, field_validator, model_validator

from .errors import ConfigInvalid
from .gibbs import BernoulliProduct, GaussMeasure, GibbsModel, MarkovChain
from .potential import Bernoulli, GaussLog, Indicator, LocallyConstant, Potential, constant
from .shift import DEFAULT_WORD_BUDGET, ShiftSpec, build_shift, full_shift, golden_mean_shift


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ShiftConfig(_Strict):
    kind: Literal["full", "golden_mean", "gauss", "matrix"] = "full"
    M: Optional[PositiveInt] = None
    transition: Optional[List[List[int]]] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "matrix" and self.transition is None:
            raise ValueError("kind 'matrix' needs a transition matrix")
        if self.kind == "full" and self.M is None:
            raise ValueError("kind 'full' needs M")
        return self

    def build(self, default_M: Optional[int] = None) -> ShiftSpec:
        if self.kind == "golden_mean":
            return golden_mean_shift()
        if self.kind == "matrix":
            return build_shift(len(self.transition), self.transition)
        M = self.M or default_M
        if M is None:
            raise ConfigInvalid("shift needs M")
        return full_shift(M)


class PotentialConfig(_Strict):
    kind: Literal["zero", "bernoulli", "gauss_log", "locally_constant"]
    weights: Optional[List[float]] = None
    p: Optional[float] = Field(None, gt=0, lt=1, description="two-symbol Bernoulli shortcut: weights (p, 1-p)")
    depth: Optional[PositiveInt] = None
    values: Optional[dict] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "bernoulli" and (self.weights is None) == (self.p is None):
            raise ValueError("bernoulli needs exactly one of 'weights' and 'p'")
        if self.kind == "locally_constant" and (self.depth is None or self.values is None):
            raise ValueError("locally_constant needs 'depth' and 'values'")
        return self

    def build(self, M: int) -> Potential:
        if self.kind == "zero":
            return constant(0.0, M)
        if self.kind == "gauss_log":
            return GaussLog()
        if self.kind == "bernoulli":
            return Bernoulli([self.p, 1 - self.p] if self.p is not None else self.weights)
        return LocallyConstant.from_json({"depth": self.depth, "values": self.values}, M)


class ObservableConfig(_Strict):
    kind: Literal["indicator"] = "indicator"
    symbol: Optional[int] = Field(None, ge=0)
    digit: Optional[int] = Field(None, ge=1, description="continued-fraction digit; symbol = digit - 1")

    @model_validator(mode="after")
    def _one(self):
        if (self.symbol is None) == (self.digit is None):
            raise ValueError("observable needs exactly one of 'symbol' and 'digit'")
        return self

    @property
    def index(self) -> int:
        return self.symbol if self.symbol is not None else self.digit - 1

    def build(self, M: int) -> Indicator:
        if self.index >= M:
            raise ConfigInvalid(f"observable symbol {self.index} outside alphabet of size {M}")
        return Indicator(self.index, M)


class ModelConfig(_Strict):
    kind: Literal["bernoulli", "geometric", "gauss", "parry", "markov"]
    weights: Optional[List[float]] = None
    ratio: float = Field(0.5, gt=0, lt=1)
    M: Optional[PositiveInt] = None
    stochastic: Optional[List[List[float]]] = None
    transition: Optional[List[List[int]]] = None
    c0: Optional[float] = Field(None, ge=1)

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "bernoulli" and self.weights is None:
            raise ValueError("bernoulli model needs 'weights'")
        if self.kind == "markov" and self.stochastic is None:
            raise ValueError("markov model needs 'stochastic'")
        return self

    def build(self) -> GibbsModel:
        if self.kind == "bernoulli":
            model = BernoulliProduct(self.weights)
        elif self.kind == "geometric":
            model = BernoulliProduct.geometric(self.ratio, self.M or 60)
        elif self.kind == "gauss":
            model = GaussMeasure(self.M or 6)
        else:
            if self.transition is not None:
                spec = build_shift(len(self.transition), self.transition)
            elif self.kind == "parry":
                spec = golden_mean_shift()
            else:
                spec = build_shift(len(self.stochastic), (np.asarray(self.stochastic) > 0).astype(int).tolist())
            model = MarkovChain.parry(spec) if self.kind == "parry" else MarkovChain(spec, self.stochastic)
        if self.c0 is not None:
            model.with_c0(self.c0)
        return model


class GridConfig(_Strict):
    values: Optional[List[float]] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    num: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.values is None and None in (self.lo, self.hi, self.num):
            raise ValueError("grid needs 'values' or all of 'lo', 'hi', 'num'")
        return self

    def points(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.lo, self.hi, self.num)


class CfracConfig(_Strict):
    op: Literal["expand", "cylinder", "periodic", "sample"]
    x: Optional[Union[str, float]] = None
    digits: Optional[List[PositiveInt]] = None
    n_digits: PositiveInt = 20
    size: PositiveInt = 1

    @model_validator(mode="after")
    def _shape(self):
        if self.op == "expand" and self.x is None:
            raise ValueError("expand needs 'x'")
        if self.op in ("cylinder", "periodic") and not self.digits:
            raise ValueError(f"{self.op} needs 'digits'")
        return self

    def exact_x(self):
        """``x`` as an exact Fraction when given as a string, else the float itself."""
        if isinstance(self.x, str):
            try:
                return Fraction(self.x)
            except ValueError as exc:
                raise ConfigInvalid(f"cannot parse x={self.x!r}") from exc
        return float(self.x)


PRESSURE_ENSEMBLES = ("word_sum", "periodic", "preimage", "transfer", "spectral")
DEVIATION_ENSEMBLES = ("lebesgue", "periodic", "preimage", "gibbs")


class ExperimentConfig(_Strict):
    """Everything a subcommand needs; each subcommand checks its own required fields."""

    shift: Optional[ShiftConfig] = None
    potential: Optional[PotentialConfig] = None
    observable: Optional[ObservableConfig] = None
    model: Optional[ModelConfig] = None
    betas: Optional[GridConfig] = None
    alphas: Optional[GridConfig] = None
    alpha: Optional[float] = None
    direction: Literal[">=", "<="] = ">="
    n: List[PositiveInt] = Field(default_factory=lambda: [12])
    M: Optional[PositiveInt] = None
    grid_size: PositiveInt = 64
    n_iter: Optional[PositiveInt] = None
    tail: bool = True
    method: str = "auto"
    ensembles: Optional[List[str]] = None
    anchor: Optional[Union[float, List[int]]] = None
    trials: PositiveInt = 10_000
    seed: int = Field(0, ge=0)
    theta: Optional[float] = Field(None, gt=0)
    depth: Optional[PositiveInt] = None
    budget: PositiveInt = DEFAULT_WORD_BUDGET
    workers: Optional[PositiveInt] = None
    cfrac: Optional[CfracConfig] = None

    @field_validator("n", mode="before")
    @classmethod
    def _n_list(cls, v):
        return [v] if isinstance(v, int) else v

    @field_validator("alpha")
    @classmethod
    def _finite(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("alpha must be finite")
        return v

    def require(self, subcommand: str, *fields: str):
        missing = [f for f in fields if getattr(self, f) is None]
        if missing:
            raise ConfigInvalid(f"{subcommand} needs {', '.join(missing)}")


def parse_config(doc) -> ExperimentConfig:
    """Validate a decoded JSON document; an empty document is invalid."""
    if not isinstance(doc, dict) or not doc:
        raise ConfigInvalid("config must be a non-empty JSON object")
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()
