"""Equations of motion of the planar n-link chain on anisotropic ground.

The chain is described by absolute link angles q and the center of mass
r_cm. Link 1 is the head: neighbouring link centers satisfy
``r_j - r_{j+1} = l_j t_j + l_{j+1} t_{j+1}`` with t_j the link tangent.
Internally the shape x = D q and the orientation psi = mean(q) are used.

Two group models are available. ``quasi_static`` drops the inertia of the
orientation and center of mass, which turns their dynamics into a linear
solve against the ground friction (second-order shape, first-order group).
``inertial`` integrates the full Euler-Lagrange system in (q, r_cm).
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from src.models.robot_models import ControlInput, FrictionMatrices, GroupModel, RobotParams, RobotState
from src.utils.exceptions import InvalidControl, NonFinite, SingularFrictionBlock
from src.utils.logger import logger

# Largest 1-norm condition number accepted for the 3x3 friction block
SINGULAR_BLOCK_CONDITION = 1e12

ControlLaw = Callable[[RobotState], ControlInput]


def difference_operator(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the difference operator D, [D q]_j = q_j - q_{j+1}, and D+ = D^T (D D^T)^-1."""
    if n < 2:
        raise ValueError(f"a chain needs at least two links, got n={n}")
    D = np.eye(n - 1, n) - np.eye(n - 1, n, k=1)
    D_plus = D.T @ np.linalg.inv(D @ D.T)
    return D, D_plus


def sum_operator(n: int) -> np.ndarray:
    """Return A with [A q]_j = q_j + q_{j+1}."""
    return np.eye(n - 1, n) + np.eye(n - 1, n, k=1)


def rotation(psi: float) -> np.ndarray:
    """Planar rotation matrix of angle psi, mapping body-frame vectors to the world frame."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ChainGeometry:
    """Constant matrices of a parameter set, built once and cached."""
    n: int
    D: np.ndarray
    D_plus: np.ndarray
    e: np.ndarray
    H: np.ndarray
    B: np.ndarray
    J: np.ndarray
    masses: np.ndarray
    total_mass: float
    c_t: np.ndarray
    c_n_bar: np.ndarray
    kappa: np.ndarray
    zeta: np.ndarray
    tau0: np.ndarray
    beta: np.ndarray
    omega0: float


@lru_cache(maxsize=64)
def chain_geometry(params: RobotParams) -> ChainGeometry:
    """Constant matrices of a chain.

    H and B come from eliminating the joint constraints through the
    mass-weighted difference operator S = (D M^-1 D^T)^-1.

    Args:
        params (RobotParams): Chain parameters; frozen, so they key the cache

    Returns:
        ChainGeometry: Operators, inertia coupling and drive constants
    """
    n = params.n
    D, D_plus = difference_operator(n)
    A = sum_operator(n)
    masses = np.array(params.m)
    M_inv = np.diag(1.0 / masses)
    L = np.diag(params.l)
    S = np.linalg.inv(D @ M_inv @ D.T)
    return ChainGeometry(
        n=n,
        D=D,
        D_plus=D_plus,
        e=np.ones(n),
        H=L @ A.T @ S @ A @ L,
        B=M_inv @ D.T @ S @ A @ L,
        J=np.array(params.J),
        masses=masses,
        total_mass=float(masses.sum()),
        c_t=np.array(params.c_t),
        c_n_bar=np.array(params.c_n_bar),
        kappa=np.array(params.kappa),
        zeta=np.array(params.zeta),
        tau0=np.array(params.tau0),
        beta=np.array(params.beta),
        omega0=params.omega0,
    )


def shape_of(q: np.ndarray) -> tuple[np.ndarray, float]:
    """Split absolute link angles into the shape x = D q and the orientation psi = mean(q)."""
    q = np.asarray(q, dtype=float)
    return q[:-1] - q[1:], float(np.mean(q))


def angles_of(x: np.ndarray, psi: float, params: RobotParams) -> np.ndarray:
    """Absolute link angles q = D+ x + psi e; inverse of shape_of."""
    geom = chain_geometry(params)
    return geom.D_plus @ np.asarray(x, dtype=float) + geom.e * psi


def inertia_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """[I(q)]_ij = H_ij cos(q_i - q_j) + J_ij."""
    geom = chain_geometry(params)
    return _inertia(np.asarray(q, dtype=float), geom)


def _inertia(q: np.ndarray, geom: ChainGeometry) -> np.ndarray:
    return geom.H * np.cos(q[:, None] - q[None, :]) + np.diag(geom.J)


def coriolis_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """[C(q)]_ij = H_ij sin(q_i - q_j), multiplying the elementwise square of qdot."""
    geom = chain_geometry(params)
    q = np.asarray(q, dtype=float)
    return geom.H * np.sin(q[:, None] - q[None, :])


def _torque(t: float, geom: ChainGeometry) -> np.ndarray:
    return geom.tau0 * np.sin(geom.omega0 * t + geom.beta)


def open_loop_torque(t: float, params: RobotParams) -> np.ndarray:
    """Periodic gait torque tau_j(t) = tau0_j sin(omega0 t + beta_j)."""
    return _torque(t, chain_geometry(params))


def _control_vector(u: Optional[ControlInput], n: int) -> np.ndarray:
    if u is None:
        return np.zeros(n)
    vector = u.u
    if vector.shape != (n,):
        raise InvalidControl(f"control must have {n} entries, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise InvalidControl("control contains non-finite entries")
    # 1 + u_j == 0 switches normal friction off and is accepted
    if np.any(1.0 + vector < 0.0):
        raise InvalidControl(f"normal friction would turn negative: min(1 + u) = {float(np.min(1.0 + vector)):.4g}")
    return vector


def _friction_blocks(q: np.ndarray, psi: float, u: np.ndarray, geom: ChainGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c_n = geom.c_n_bar * (1.0 + u)
    dq = q[:, None] - q[None, :]
    B_s = geom.B * np.sin(dq)
    B_c = geom.B * np.cos(dq)
    mc_t = geom.masses * geom.c_t
    mc_n = geom.masses * c_n
    R_qq = B_s.T @ (mc_t[:, None] * B_s) + B_c.T @ (mc_n[:, None] * B_c) + np.diag(c_n * geom.J)
    cq = np.cos(q - psi)
    sq = np.sin(q - psi)
    R_qv = np.column_stack([
        B_s.T @ (mc_t * cq) - B_c.T @ (mc_n * sq),
        B_s.T @ (mc_t * sq) + B_c.T @ (mc_n * cq),
    ])
    r12 = float(np.sum((mc_t - mc_n) * sq * cq))
    R_vv = np.array([
        [float(np.sum(mc_t * cq ** 2 + mc_n * sq ** 2)), r12],
        [r12, float(np.sum(mc_t * sq ** 2 + mc_n * cq ** 2))],
    ])
    return R_qq, R_qv, R_vv


def friction_matrices(q: np.ndarray, psi: float, params: RobotParams, u: Optional[ControlInput] = None) -> FrictionMatrices:
    """Damping blocks of the ground friction with c_n = c_n_bar (1 + u)."""
    geom = chain_geometry(params)
    R_qq, R_qv, R_vv = _friction_blocks(np.asarray(q, dtype=float), psi, _control_vector(u, params.n), geom)
    return FrictionMatrices(R_qq=R_qq, R_qv=R_qv, R_vv=R_vv)


def _closure(q: np.ndarray, psi: float, xdot: np.ndarray, u: np.ndarray, geom: ChainGeometry):
    """Quasi-static orientation rate and body-frame velocity for a shape velocity."""
    R_qq, R_qv, R_vv = _friction_blocks(q, psi, u, geom)
    qdot_shape = geom.D_plus @ xdot
    Rqq_e = R_qq @ geom.e
    block = np.empty((3, 3))
    block[0, 0] = geom.e @ Rqq_e
    block[0, 1:] = geom.e @ R_qv
    block[1:, 0] = R_qv.T @ geom.e
    block[1:, 1:] = R_vv
    # the inverse serves both the solve and the condition estimate
    try:
        inverse = np.linalg.inv(block)
    except np.linalg.LinAlgError:
        inverse = None
    if inverse is None or not np.all(np.isfinite(inverse)) \
            or _norm1(block) * _norm1(inverse) > SINGULAR_BLOCK_CONDITION:
        raise SingularFrictionBlock(
            f"friction block is singular (diagonal {np.diag(block)}); are all friction coefficients zero?"
        )
    rhs = np.concatenate([[Rqq_e @ qdot_shape], R_qv.T @ qdot_shape])
    solution = -inverse @ rhs
    return float(solution[0]), solution[1:], (R_qq, R_qv, R_vv)


def _norm1(matrix: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(matrix), axis=0)))


def _shape_acceleration(q, x, xdot, qdot, v, tau, R_qq, R_qv, geom: ChainGeometry) -> np.ndarray:
    dq = q[:, None] - q[None, :]
    inertia = geom.H * np.cos(dq) + np.diag(geom.J)
    coriolis = geom.H * np.sin(dq)
    generalized = (
        geom.D.T @ (tau - geom.kappa * x - geom.zeta * xdot)
        - coriolis @ qdot ** 2 - R_qq @ qdot - R_qv @ v
    )
    return geom.D @ np.linalg.solve(inertia, generalized)


def group_velocity(state: RobotState, xdot: np.ndarray, u: Optional[ControlInput], params: RobotParams) -> tuple[float, np.ndarray]:
    """Quasi-static (psi_dot, r_cm_dot) driven by the shape velocity xdot.

    Raises:
        SingularFrictionBlock: If the friction block cannot be inverted.
    """
    geom = chain_geometry(params)
    psi = state.psi
    psi_dot, v, _ = _closure(state.q, psi, np.asarray(xdot, dtype=float), _control_vector(u, params.n), geom)
    return psi_dot, rotation(psi) @ v


def shape_acceleration(state: RobotState, tau: np.ndarray, u: Optional[ControlInput], params: RobotParams) -> np.ndarray:
    """Shape acceleration xddot for the given joint torques.

    Under the quasi-static model psi_dot and the body velocity come from
    the group closure; under the inertial model they are read from the state.
    """
    geom = chain_geometry(params)
    u_vec = _control_vector(u, params.n)
    q, x, xdot, psi = state.q, state.x, state.xdot, state.psi
    if params.group_model is GroupModel.INERTIAL:
        R_qq, R_qv, _ = _friction_blocks(q, psi, u_vec, geom)
        return _shape_acceleration(q, x, xdot, state.qdot, rotation(psi).T @ state.r_cm_dot,
                                   np.asarray(tau, dtype=float), R_qq, R_qv, geom)
    psi_dot, v, (R_qq, R_qv, _) = _closure(q, psi, xdot, u_vec, geom)
    qdot = geom.D_plus @ xdot + geom.e * psi_dot
    return _shape_acceleration(q, x, xdot, qdot, v, np.asarray(tau, dtype=float), R_qq, R_qv, geom)


def full_acceleration(state: RobotState, tau: np.ndarray, u: Optional[ControlInput], params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """(qddot, r_cm_ddot) of the inertial Euler-Lagrange system."""
    geom = chain_geometry(params)
    return _inertial_acceleration(state.q, state.qdot, state.r_cm_dot, np.asarray(tau, dtype=float),
                                  _control_vector(u, params.n), geom)


def _inertial_acceleration(q, qdot, r_dot, tau, u, geom: ChainGeometry):
    psi = float(np.mean(q))
    R_qq, R_qv, R_vv = _friction_blocks(q, psi, u, geom)
    rot = rotation(psi)
    v = rot.T @ r_dot
    dq = q[:, None] - q[None, :]
    inertia = geom.H * np.cos(dq) + np.diag(geom.J)
    coriolis = geom.H * np.sin(dq)
    x = geom.D @ q
    xdot = geom.D @ qdot
    generalized = (
        geom.D.T @ (tau - geom.kappa * x - geom.zeta * xdot)
        - coriolis @ qdot ** 2 - R_qq @ qdot - R_qv @ v
    )
    qddot = np.linalg.solve(inertia, generalized)
    r_ddot = rot @ (-R_vv @ v - R_qv.T @ qdot) / geom.total_mass
    return qddot, r_ddot


def _quasi_static_rhs(t: float, y: np.ndarray, u: np.ndarray, geom: ChainGeometry) -> np.ndarray:
    k = geom.n - 1
    x, xdot, psi = y[:k], y[k:2 * k], y[2 * k]
    q = geom.D_plus @ x + geom.e * psi
    psi_dot, v, (R_qq, R_qv, _) = _closure(q, psi, xdot, u, geom)
    qdot = geom.D_plus @ xdot + geom.e * psi_dot
    xddot = _shape_acceleration(q, x, xdot, qdot, v, _torque(t, geom), R_qq, R_qv, geom)
    return np.concatenate([xdot, xddot, [psi_dot], rotation(psi) @ v])


def _inertial_rhs(t: float, y: np.ndarray, u: np.ndarray, geom: ChainGeometry) -> np.ndarray:
    n = geom.n
    q, qdot, r_dot = y[:n], y[n:2 * n], y[2 * n + 2:]
    qddot, r_ddot = _inertial_acceleration(q, qdot, r_dot, _torque(t, geom), u, geom)
    return np.concatenate([qdot, qddot, r_dot, r_ddot])


def _rk4(rhs, t: float, y: np.ndarray, dt: float, u: np.ndarray, geom: ChainGeometry) -> np.ndarray:
    k1 = rhs(t, y, u, geom)
    k2 = rhs(t + dt / 2, y + dt / 2 * k1, u, geom)
    k3 = rhs(t + dt / 2, y + dt / 2 * k2, u, geom)
    k4 = rhs(t + dt, y + dt * k3, u, geom)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _quasi_static_state(x, xdot, psi, r_cm, t, u, geom: ChainGeometry) -> RobotState:
    q = geom.D_plus @ x + geom.e * psi
    psi_dot, v, _ = _closure(q, psi, xdot, u, geom)
    return RobotState(
        q=q,
        qdot=geom.D_plus @ xdot + geom.e * psi_dot,
        r_cm=r_cm,
        r_cm_dot=rotation(psi) @ v,
        t=t,
    )


def initial_state(
    params: RobotParams,
    x: Optional[np.ndarray] = None,
    xdot: Optional[np.ndarray] = None,
    psi: float = 0.0,
    r_cm: Optional[np.ndarray] = None,
    t: float = 0.0,
    u: Optional[ControlInput] = None,
    psi_dot: float = 0.0,
    r_cm_dot: Optional[np.ndarray] = None,
) -> RobotState:
    """Build a state from shape coordinates.

    Under the quasi-static model psi_dot and r_cm_dot are fixed by the
    group closure and the corresponding arguments are ignored.
    """
    geom = chain_geometry(params)
    k = params.n - 1
    x = np.zeros(k) if x is None else np.asarray(x, dtype=float)
    xdot = np.zeros(k) if xdot is None else np.asarray(xdot, dtype=float)
    r_cm = np.zeros(2) if r_cm is None else np.asarray(r_cm, dtype=float)
    if params.group_model is GroupModel.QUASI_STATIC:
        return _quasi_static_state(x, xdot, psi, r_cm, t, _control_vector(u, params.n), geom)
    return RobotState(
        q=geom.D_plus @ x + geom.e * psi,
        qdot=geom.D_plus @ xdot + geom.e * psi_dot,
        r_cm=r_cm,
        r_cm_dot=np.zeros(2) if r_cm_dot is None else np.asarray(r_cm_dot, dtype=float),
        t=t,
    )


def step(state: RobotState, u: Optional[ControlInput], params: RobotParams, dt: float) -> RobotState:
    """Advance the chain by one classical RK4 step of size dt.

    The control is held constant over the step; the gait torque is
    evaluated at the RK4 stage times.

    Raises:
        NonFinite: If the state leaves the finite range.
        InvalidControl: If a normal friction coefficient would turn negative.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not state.is_finite():
        raise NonFinite(f"non-finite state at t={state.t:.4f}")
    geom = chain_geometry(params)
    u_vec = _control_vector(u, params.n)
    k = params.n - 1
    try:
        if params.group_model is GroupModel.QUASI_STATIC:
            y = np.concatenate([state.x, state.xdot, [state.psi], state.r_cm])
            y_new = _rk4(_quasi_static_rhs, state.t, y, dt, u_vec, geom)
            if not np.all(np.isfinite(y_new)):
                raise NonFinite(f"state left the finite range during step at t={state.t:.4f}")
            return _quasi_static_state(y_new[:k], y_new[k:2 * k], float(y_new[2 * k]), y_new[2 * k + 1:],
                                       state.t + dt, u_vec, geom)

        n = params.n
        y = np.concatenate([state.q, state.qdot, state.r_cm, state.r_cm_dot])
        y_new = _rk4(_inertial_rhs, state.t, y, dt, u_vec, geom)
        if not np.all(np.isfinite(y_new)):
            raise NonFinite(f"state left the finite range during step at t={state.t:.4f}")
        return RobotState(q=y_new[:n], qdot=y_new[n:2 * n], r_cm=y_new[2 * n:2 * n + 2],
                          r_cm_dot=y_new[2 * n + 2:], t=state.t + dt)
    except np.linalg.LinAlgError as e:
        logger.error(f"Linear algebra failure at t={state.t:.4f}: {e}", exc_info=True)
        raise NonFinite(f"linear algebra failure at t={state.t:.4f}: {e}") from e


def total_energy(state: RobotState, params: RobotParams) -> tuple[float, float]:
    """Kinetic energy 1/2 m |r_cm_dot|^2 + 1/2 qdot^T I(q) qdot and spring energy 1/2 sum kappa_j x_j^2."""
    geom = chain_geometry(params)
    kinetic = 0.5 * geom.total_mass * float(state.r_cm_dot @ state.r_cm_dot) \
        + 0.5 * float(state.qdot @ _inertia(state.q, geom) @ state.qdot)
    potential = 0.5 * float(np.sum(geom.kappa * state.x ** 2))
    return kinetic, potential


def rollout(
    state: RobotState,
    params: RobotParams,
    dt: float,
    steps: int,
    control: Optional[ControlLaw] = None,
) -> list[RobotState]:
    """Simulate ``steps`` RK4 steps; returns every state including the initial one."""
    states = [state]
    for _ in range(steps):
        u = control(state) if control is not None else None
        state = step(state, u, params, dt)
        states.append(state)
    return states
