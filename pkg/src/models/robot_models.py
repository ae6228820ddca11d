from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Nominal values for the five-link chain
NOMINAL_TAU0 = (2.0, 1.1, 1.0, 2.0)


def _split_vector(value):
    """Accept comma separated text (config files) as well as sequences."""
    if isinstance(value, str):
        return tuple(float(item) for item in value.split(",") if item.strip())
    if isinstance(value, np.ndarray):
        return tuple(float(item) for item in value.ravel())
    return value


class GroupModel(str, Enum):
    """How the global orientation and center of mass are advanced."""
    QUASI_STATIC = "quasi_static"
    INERTIAL = "inertial"


class RobotParams(BaseModel):
    """Physical and actuation constants of the planar n-link chain (SI units)."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(5, description="Number of links", ge=2)
    m: tuple[float, ...] = Field(None, description="Per-link mass [kg]")
    l: tuple[float, ...] = Field(None, description="Per-link half-length [m]")
    J: tuple[float, ...] = Field(None, description="Per-link moment of inertia [kg m^2]")
    c_t: tuple[float, ...] = Field(None, description="Per-link tangential friction coefficient [1/s]")
    c_n_bar: tuple[float, ...] = Field(None, description="Per-link nominal normal friction coefficient [1/s]")
    kappa: tuple[float, ...] = Field(None, description="Per-joint torsional spring coefficient [N m/rad]")
    zeta: tuple[float, ...] = Field(None, description="Per-joint viscous friction coefficient [N m s/rad]")
    tau0: tuple[float, ...] = Field(None, description="Per-joint torque amplitude [N m]")
    beta: tuple[float, ...] = Field(None, description="Per-joint torque phase [rad]; defaults to a traveling wave")
    omega0: float = Field(1.0, description="Drive frequency [rad/s]", gt=0)
    group_model: GroupModel = Field(GroupModel.QUASI_STATIC, description="Group variable dynamics")

    @field_validator("m", "l", "J", "c_t", "c_n_bar", "kappa", "zeta", "tau0", "beta", mode="before")
    @classmethod
    def parse_vector(cls, value):
        return _split_vector(value)

    @model_validator(mode="before")
    @classmethod
    def fill_nominal_values(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        n = int(data.get("n", 5))
        links = {"m": 1.0, "l": 1.0, "J": 1.0 / 3.0, "c_t": 0.1, "c_n_bar": 0.5}
        joints = {"kappa": 3.0, "zeta": 0.1}
        for key, value in links.items():
            if data.get(key) is None:
                data[key] = (value,) * n
        for key, value in joints.items():
            if data.get(key) is None:
                data[key] = (value,) * (n - 1)
        if data.get("tau0") is None:
            data["tau0"] = tuple(float(v) for v in np.resize(NOMINAL_TAU0, n - 1))
        if data.get("beta") is None:
            data["beta"] = tuple(j * 2.0 * np.pi / n for j in range(n - 1))
        return data

    @model_validator(mode="after")
    def check_invariants(self) -> "RobotParams":
        n = self.n
        for name in ("m", "l", "J", "c_t", "c_n_bar"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries, got {len(getattr(self, name))}")
        for name in ("kappa", "zeta", "tau0", "beta"):
            if len(getattr(self, name)) != n - 1:
                raise ValueError(f"{name} must have {n - 1} entries, got {len(getattr(self, name))}")
        for name in ("m", "l", "J"):
            if min(getattr(self, name)) <= 0:
                raise ValueError(f"all entries of {name} must be strictly positive")
        if min(self.c_t) < 0 or min(self.c_n_bar) < 0:
            raise ValueError("friction coefficients must be nonnegative")
        if any(cn <= ct for cn, ct in zip(self.c_n_bar, self.c_t)) and max(self.c_n_bar) > 0:
            raise ValueError("normal friction must exceed tangential friction on every link")
        return self

    @classmethod
    def frictionless(cls, n: int = 5, **overrides) -> "RobotParams":
        """Chain with every dissipative coefficient set to zero."""
        values = dict(n=n, c_t=(0.0,) * n, c_n_bar=(0.0,) * n, zeta=(0.0,) * (n - 1))
        values.update(overrides)
        return cls(**values)

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega0


class RobotState(BaseModel):
    """Configuration and velocities of the chain at time t.

    Angles are stored unwrapped so psi accumulates net rotation.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: np.ndarray
    qdot: np.ndarray
    r_cm: np.ndarray
    r_cm_dot: np.ndarray
    t: float = 0.0

    @field_validator("q", "qdot", "r_cm", "r_cm_dot", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @property
    def x(self) -> np.ndarray:
        return self.q[:-1] - self.q[1:]

    @property
    def xdot(self) -> np.ndarray:
        return self.qdot[:-1] - self.qdot[1:]

    @property
    def psi(self) -> float:
        return float(np.mean(self.q))

    @property
    def psi_dot(self) -> float:
        return float(np.mean(self.qdot))

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))
            and np.all(np.isfinite(self.r_cm)) and np.all(np.isfinite(self.r_cm_dot))
            and np.isfinite(self.t)
        )


class ControlInput(BaseModel):
    """Per-link normal friction perturbation, c_n = c_n_bar * (1 + u)."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u: np.ndarray

    @field_validator("u", mode="before")
    @classmethod
    def as_array(cls, value):
        return np.array(value, dtype=float)

    @classmethod
    def zeros(cls, n: int) -> "ControlInput":
        return cls(u=np.zeros(n))


class FrictionMatrices(BaseModel):
    """Configuration dependent damping blocks of the ground contact."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    R_qq: np.ndarray = Field(..., description="n x n angle/angle block")
    R_qv: np.ndarray = Field(..., description="n x 2 angle/body-velocity block")
    R_vv: np.ndarray = Field(..., description="2 x 2 body-velocity block")
