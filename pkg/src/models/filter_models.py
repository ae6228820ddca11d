from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.engine.fourier import TERM_PATTERN
from src.models.sensor_models import SensorWeights


class FilterConfig(BaseModel):
    """Particle settings of the per-joint oscillator filters."""
    model_config = ConfigDict(frozen=True)

    N: int = Field(100, description="Particles per joint", ge=2)
    delta: float = Field(0.05, description="Half-width of the particle frequency spread [rad/s]", ge=0)
    gain_basis: tuple[str, ...] = Field(("sin1", "cos1", "sin2", "cos2"), description="Galerkin gain basis")
    workers: int = Field(1, description="Threads used to update the joints within one step", ge=1)

    @field_validator("gain_basis", mode="before")
    @classmethod
    def parse_basis(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(",") if item.strip())
        return value

    @field_validator("gain_basis")
    @classmethod
    def check_terms(cls, value):
        for term in value:
            if TERM_PATTERN.match(term) is None:
                raise ValueError(f"unknown gain basis term '{term}'")
        return value


class ParticleEnsemble(BaseModel):
    """Oscillator particles of one joint filter."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: np.ndarray = Field(..., description="Phases [rad], wrapped to [0, 2pi)")
    omega: np.ndarray = Field(..., description="Frequencies [rad/s], fixed once drawn")

    @field_validator("theta", "omega", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @property
    def N(self) -> int:
        return int(self.theta.shape[0])


class GainSolution(BaseModel):
    """Galerkin coefficients of one joint gain at one step."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kappa: np.ndarray = Field(..., description="Coefficients over the gain basis")
    basis: tuple[str, ...]
    condition: float = Field(..., description="Condition number of the Galerkin normal matrix")
    regularized: bool = Field(False, description="Whether the ridge fallback was used")
    h_hat: float = Field(0.0, description="Particle mean of the learned observation function")


class FilterBank(BaseModel):
    """Particle ensembles of every joint together with the learned sensor weights."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ensembles: list[ParticleEnsemble]
    weights: SensorWeights
    clock: Optional[float] = Field(None, description="Robot time of the last observation the particles absorbed [s]")

    @property
    def joints(self) -> int:
        return len(self.ensembles)

    def phases(self) -> np.ndarray:
        """Particle phases, shape (joints, N)."""
        return np.array([ensemble.theta for ensemble in self.ensembles])
