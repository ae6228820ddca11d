from pydantic import BaseModel, Field
from typing import Optional, List


class OpenLoopParams(BaseModel):
    """Model for open-loop simulation parameters"""
    config_path: Optional[str] = Field(None, description="Experiment config file; defaults are used when omitted")
    periods: int = Field(20, description="Gait periods to simulate", ge=1, le=1000)
    verify: bool = Field(True, description="Extract the limit cycle before simulating")
    out_dir: Optional[str] = Field(None, description="Directory for the trajectory CSV")


class OpenLoopSummary(BaseModel):
    """Model for open-loop simulation response"""
    periods: int
    steps: int
    net_displacement: float = Field(..., description="Distance between first and last center of mass [m]")
    net_dpsi: float = Field(..., description="Net change of the global orientation [rad]")
    closure_residual: Optional[float] = None
    files: List[str] = []


class LimitCycleParams(BaseModel):
    """Model for limit cycle extraction parameters"""
    config_path: Optional[str] = Field(None, description="Experiment config file; defaults are used when omitted")
    samples_per_period: int = Field(256, description="Phase samples per joint", ge=8, le=4096)
    settle_periods: int = Field(40, description="Periods settled from rest before sampling", ge=1, le=1000)
    out_dir: Optional[str] = Field(None, description="Directory for the per-joint atlas CSVs")


class LimitCycleSummary(BaseModel):
    """Model for limit cycle extraction response"""
    joints: int
    samples: int
    period: float
    time_origin: float
    closure_residual: float
    amplitudes: List[float] = Field(..., description="Peak |x_j| on the orbit of each joint [rad]")
    files: List[str] = []


class LearnParams(BaseModel):
    """Model for learning run parameters"""
    config_path: Optional[str] = Field(None, description="Experiment config file; defaults are used when omitted")
    episodes: Optional[int] = Field(None, description="Override for the number of episodes", ge=1)
    seed: Optional[int] = Field(None, description="Override for the master seed", ge=0)
    out_dir: Optional[str] = Field(None, description="Directory for checkpoint, metrics and traces")


class LearningSummary(BaseModel):
    """Model for learning run response"""
    episodes: int
    first_error: float = Field(..., description="Average squared Bellman error of the first episode")
    last_error: float = Field(..., description="Average squared Bellman error of the last episode")
    w3_min: float = Field(..., description="Smallest quadratic weight at the end of learning")
    files: List[str] = []


class EvaluateParams(BaseModel):
    """Model for policy evaluation parameters"""
    checkpoint_path: str = Field(..., description="Weight checkpoint written by a learning run", min_length=1)
    config_path: Optional[str] = Field(None, description="Experiment config file; defaults are used when omitted")
    periods: Optional[int] = Field(None, description="Override for the evaluated periods", ge=1)
    seed: Optional[int] = Field(None, description="Override for the master seed", ge=0)
    out_dir: Optional[str] = Field(None, description="Directory for the evaluation trajectory and traces")


class EvaluationSummary(BaseModel):
    """Model for policy evaluation response"""
    periods: int
    net_dpsi: float = Field(..., description="Net change of the global orientation [rad]; negative is clockwise")
    mean_control_norm: float
    clamp_events: int
    final_position: List[float]
    files: List[str] = []
