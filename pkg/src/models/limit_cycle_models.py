import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class LimitCycleAtlas(BaseModel):
    """Per-joint tabulated phase parametrization of the nominal gait.

    Row j of ``x`` and ``xdot`` holds joint j (0-based) sampled at the
    uniformly spaced phases ``theta``.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: np.ndarray = Field(..., description="Phase samples [rad], uniform on [0, 2pi)")
    x: np.ndarray = Field(..., description="Shape samples, shape (n-1, K) [rad]")
    xdot: np.ndarray = Field(..., description="Shape velocity samples, shape (n-1, K) [rad/s]")
    period: float = Field(..., description="Orbit period [s]", gt=0)
    omega0: float = Field(..., description="Drive frequency [rad/s]", gt=0)
    time_origin: float = Field(0.0, description="Torque clock time of phase 0, modulo the period [s]")
    closure_residual: float = Field(0.0, description="Orbit closure residual measured at extraction")

    @field_validator("theta", "x", "xdot", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @model_validator(mode="after")
    def check_table(self) -> "LimitCycleAtlas":
        K = self.theta.shape[0]
        if self.x.ndim != 2 or self.x.shape != self.xdot.shape or self.x.shape[1] != K:
            raise ValueError(f"x and xdot must have shape (joints, {K})")
        if not np.allclose(self.theta, 2.0 * np.pi * np.arange(K) / K, atol=1e-9):
            raise ValueError("theta samples must be uniformly spaced on [0, 2pi)")
        if abs(self.period * self.omega0 - 2.0 * np.pi) > 1e-6:
            raise ValueError("period * omega0 must equal 2pi")
        return self

    @property
    def samples(self) -> int:
        return int(self.theta.shape[0])

    @property
    def joints(self) -> int:
        return int(self.x.shape[0])
