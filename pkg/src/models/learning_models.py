from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.engine.fourier import TERM_PATTERN


class TurnDirection(str, Enum):
    CLOCKWISE = "clockwise"
    COUNTERCLOCKWISE = "counterclockwise"


class FeatureConfig(BaseModel):
    """Layout of the Hamiltonian features for an n-link chain."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(5, description="Number of links", ge=2)
    Phi: tuple[str, ...] = Field(("cos1", "sin1", "cos2", "sin2"), description="Fourier functions per joint")

    @field_validator("Phi", mode="before")
    @classmethod
    def parse_basis(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(",") if item.strip())
        return value

    @field_validator("Phi")
    @classmethod
    def check_terms(cls, value):
        if not value:
            raise ValueError("Phi must contain at least one term")
        for term in value:
            if TERM_PATTERN.match(term) is None:
                raise ValueError(f"unknown feature term '{term}'")
        return value

    @property
    def M_F(self) -> int:
        return len(self.Phi)

    @property
    def joints(self) -> int:
        return self.n - 1

    @property
    def M(self) -> int:
        return 3 * self.joints * self.M_F + self.n


class QWeights(BaseModel):
    """Linear Hamiltonian weights, one array per feature group.

    ``w2`` is laid out per joint j as the block weighting u_j * Phi(theta_j)
    followed by the block weighting u_{j+1} * Phi(theta_j).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    w1: np.ndarray = Field(..., description="Group 1, length (n-1) * M_F")
    w2: np.ndarray = Field(..., description="Group 2, length 2 (n-1) * M_F")
    w3: np.ndarray = Field(..., description="Group 3, coefficients of u_j^2 / 2, length n")

    @field_validator("w1", "w2", "w3", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float).ravel()

    @model_validator(mode="after")
    def check_groups(self) -> "QWeights":
        if self.w2.shape[0] != 2 * self.w1.shape[0]:
            raise ValueError(f"w2 must be twice as long as w1, got {self.w2.shape[0]} and {self.w1.shape[0]}")
        if self.w3.shape[0] < 2:
            raise ValueError("w3 needs one entry per link")
        return self

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2, self.w3])

    def with_vector(self, vector: np.ndarray) -> "QWeights":
        """Weights of the same layout taken from a flat vector."""
        a, b = self.w1.shape[0], self.w2.shape[0]
        return QWeights(w1=vector[:a], w2=vector[a:a + b], w3=vector[a + b:])

    def a_blocks(self, M_F: int) -> np.ndarray:
        """Weights of u_j * Phi(theta_j), shape (n-1, M_F)."""
        return self.w2.reshape(-1, 2, M_F)[:, 0, :]

    def b_blocks(self, M_F: int) -> np.ndarray:
        """Weights of u_{j+1} * Phi(theta_j), shape (n-1, M_F)."""
        return self.w2.reshape(-1, 2, M_F)[:, 1, :]


class LearningConfig(BaseModel):
    """Q-learning hyperparameters and episode layout."""
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(0.5, description="Discount rate", gt=0)
    epsilon: float = Field(10.0, description="Control penalty parameter", gt=0)
    alpha: float = Field(0.01, description="Q-weight learning rate; 0 freezes the learner", ge=0)
    A: float = Field(0.5, description="Exploration amplitude", gt=0)
    dt: float = Field(0.02, description="Step size [s]", gt=0)
    n_T: int = Field(10, description="Periods per episode", ge=1)
    n_e: int = Field(200, description="Number of episodes", ge=1)
    reinit_jitter: float = Field(0.1, description="Half-width of the phase offset at the start of later episodes [rad]",
                                 ge=0, le=np.pi)
    turn_direction: TurnDirection = Field(TurnDirection.CLOCKWISE, description="Rotation the cost rewards")

    @property
    def cost_sign(self) -> float:
        return 1.0 if self.turn_direction is TurnDirection.CLOCKWISE else -1.0


class EpisodeLog(BaseModel):
    """Per-step record of one learning episode."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    episode: int = Field(..., description="Episode index, 1-based", ge=1)
    dt: float = Field(..., gt=0)
    horizon: float = Field(..., description="Nominal episode length n_T * T [s]", gt=0)
    bellman_errors: np.ndarray
    costs: np.ndarray
    psi_trace: np.ndarray = Field(..., description="psi at every step including the initial state")
    weight_snapshot: QWeights
    sensor_weights: Optional[np.ndarray] = Field(None, description="Sensor weights at the end of the episode, shape (n-1, M_h)")

    @field_validator("bellman_errors", "costs", "psi_trace", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @field_validator("sensor_weights", mode="before")
    @classmethod
    def as_optional_array(cls, value):
        return None if value is None else np.array(value, dtype=float)

    @property
    def steps(self) -> int:
        return int(self.bellman_errors.shape[0])

    @property
    def mean_squared_error(self) -> float:
        """Squared Bellman error integrated over the steps and divided by the nominal episode length."""
        return float(np.sum(self.bellman_errors**2) * self.dt / self.horizon)

    @property
    def net_dpsi(self) -> float:
        return float(self.psi_trace[-1] - self.psi_trace[0])

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs)) if self.costs.size else 0.0
