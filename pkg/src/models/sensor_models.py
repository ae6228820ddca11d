from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.engine.fourier import TERM_PATTERN


def _split_terms(value):
    if isinstance(value, str):
        return tuple(item.strip() for item in value.split(",") if item.strip())
    return value


class SensorConfig(BaseModel):
    """Joint sensor noise, ground-truth observation function and learned-model basis."""
    model_config = ConfigDict(frozen=True)

    sigma_W: float = Field(0.1, description="Observation noise standard deviation", gt=0)
    h_true: Literal["x", "xdot"] = Field("x", description="Ground-truth observation of joint j: x_j or xdot_j")
    basis: tuple[str, ...] = Field(("sin1", "sin2", "cos2"), description="Fourier basis of the learned observation model")
    alpha_h: float = Field(0.01, description="Learning rate of the observation model", gt=0)

    @field_validator("basis", mode="before")
    @classmethod
    def parse_basis(cls, value):
        return _split_terms(value)

    @field_validator("basis")
    @classmethod
    def check_terms(cls, value):
        if not value:
            raise ValueError("basis must contain at least one term")
        for term in value:
            if TERM_PATTERN.match(term) is None:
                raise ValueError(f"unknown basis term '{term}'")
        return value

    @property
    def M_h(self) -> int:
        return len(self.basis)


class SensorWeights(BaseModel):
    """Learned observation model weights, one row per joint."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    r: np.ndarray = Field(..., description="Weights, shape (n-1, M_h)")
    alpha_h: float = Field(0.01, description="Learning rate", gt=0)

    @field_validator("r", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @model_validator(mode="after")
    def check_finite(self) -> "SensorWeights":
        if self.r.ndim != 2:
            raise ValueError("r must be a (joints, M_h) array")
        if not np.all(np.isfinite(self.r)):
            raise ValueError("sensor weights must be finite")
        return self

    @classmethod
    def zeros(cls, joints: int, cfg: SensorConfig) -> "SensorWeights":
        return cls(r=np.zeros((joints, cfg.M_h)), alpha_h=cfg.alpha_h)
