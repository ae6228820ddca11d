from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.filter_models import FilterBank, FilterConfig
from src.models.learning_models import EpisodeLog, FeatureConfig, LearningConfig, QWeights
from src.models.limit_cycle_models import LimitCycleAtlas
from src.models.robot_models import RobotParams, RobotState
from src.models.sensor_models import SensorConfig


class EvaluationConfig(BaseModel):
    """Closed-loop rollout settings."""
    model_config = ConfigDict(frozen=True)

    periods: int = Field(20, description="Gait periods driven by the learned policy", ge=1)
    warmup_periods: int = Field(20, description="Open-loop periods of filtering before the policy starts, when no filter bank is supplied", ge=0)
    clamp: float = Field(0.95, description="Bound on |u_j| applied to the policy output", gt=0, lt=1)


class RunConfig(BaseModel):
    """Seeding and output settings."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, description="Master seed", ge=0)
    output_dir: str = Field("runs", description="Directory receiving CSV and figure output")
    trace_stride: int = Field(50, description="Steps between recorded sensor-weight and gain samples", ge=1)


class ExperimentConfig(BaseModel):
    """Every setting of an experiment, grouped by section."""
    model_config = ConfigDict(frozen=True)

    robot: RobotParams = Field(default_factory=RobotParams)
    sensor: SensorConfig = Field(default_factory=SensorConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    learning: LearningConfig = Field(default_factory=LearningConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def check_sections(self) -> "ExperimentConfig":
        if self.filter.N <= len(self.filter.gain_basis):
            raise ValueError(f"filter.N ({self.filter.N}) must exceed the gain basis size ({len(self.filter.gain_basis)})")
        if self.filter.delta >= self.robot.omega0:
            raise ValueError("filter.delta must be smaller than robot.omega0")
        return self

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(n=self.robot.n)

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.learning.n_T * self.robot.period / self.learning.dt))


class RunTrace(BaseModel):
    """Rows collected during a run for CSV export."""
    weights: list[tuple] = Field(default_factory=list, description="(t, j, r_1..r_Mh)")
    observations: list[tuple] = Field(default_factory=list, description="(t, j, dZ)")
    particles: list[tuple] = Field(default_factory=list, description="(t, j, i, theta, omega)")
    gains: list[tuple] = Field(default_factory=list, description="(t, j, cond_A, kappa_norm)")
    tracking: list[tuple] = Field(default_factory=list, description="(t, j, x, xdot, h_true, h_hat, theta_mean, theta_true)")


class OpenLoopResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: list[RobotState]
    atlas: Optional[LimitCycleAtlas] = None

    @property
    def net_displacement(self) -> float:
        return float(np.linalg.norm(self.states[-1].r_cm - self.states[0].r_cm))

    @property
    def net_dpsi(self) -> float:
        return self.states[-1].psi - self.states[0].psi


class LearningResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: QWeights
    episodes: list[EpisodeLog]
    bank: FilterBank
    atlas: LimitCycleAtlas
    trace: RunTrace


class EvaluationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: list[RobotState]
    controls: np.ndarray = Field(..., description="Applied control per step, shape (steps, n)")
    clamp_events: int = Field(0, description="Steps on which the policy output was clipped")
    bank: FilterBank
    trace: RunTrace

    @property
    def net_dpsi(self) -> float:
        return self.states[-1].psi - self.states[0].psi

    @property
    def path(self) -> np.ndarray:
        return np.array([state.r_cm for state in self.states])

    @property
    def mean_control_norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.controls, axis=1))) if len(self.controls) else 0.0
