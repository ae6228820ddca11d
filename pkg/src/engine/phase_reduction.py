"""Limit cycle extraction and phase maps for each joint of the gait.

Off the orbit, the phase of a point is the phase of the nearest orbit
sample in the (x_j, xdot_j / omega0) plane. Phase 0 is the upward zero
crossing of x_1; every joint shares that time origin.
"""

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from src.engine.dynamics import initial_state, rollout
from src.models.limit_cycle_models import LimitCycleAtlas
from src.models.robot_models import RobotParams, RobotState
from src.utils.exceptions import NoLimitCycle
from src.utils.logger import logger

TWO_PI = 2.0 * np.pi


def wrap(theta):
    """Map phases to [0, 2pi).

    Args:
        theta: Phase or array of phases [rad]

    Returns:
        Phases of the same shape, wrapped
    """
    return np.mod(theta, TWO_PI)


def find_limit_cycle(
    params: RobotParams,
    settle_periods: int = 40,
    samples_per_period: int = 256,
    dt: float = 0.02,
    tolerance: float = 1e-2,
) -> LimitCycleAtlas:
    """Settle the open-loop gait and tabulate one period of every joint orbit.

    Args:
        params (RobotParams): Chain and drive parameters
        settle_periods (int): Periods simulated from rest before sampling
        samples_per_period (int): Number K of uniform phase samples
        dt (float): Integrator step [s]
        tolerance (float): Largest accepted orbit closure residual

    Returns:
        LimitCycleAtlas: Tables of (x_j, xdot_j) at K uniform phases

    Raises:
        NoLimitCycle: If the orbit does not close within tolerance or x_1
            never crosses zero upward
    """
    if settle_periods < 1:
        raise ValueError(f"settle_periods must be at least 1, got {settle_periods}")
    if samples_per_period < 8:
        raise ValueError(f"samples_per_period must be at least 8, got {samples_per_period}")

    period = params.period
    logger.info(f"Extracting limit cycle: n={params.n}, settle_periods={settle_periods}, K={samples_per_period}")

    try:
        settled = rollout(initial_state(params), params, dt, int(round(settle_periods * period / dt)))[-1]
        recorded = rollout(settled, params, dt, int(np.ceil(2.0 * period / dt)) + 2)

        times = np.array([s.t for s in recorded])
        x = np.array([s.x for s in recorded])
        xdot = np.array([s.xdot for s in recorded])
        x_spline = CubicSpline(times, x, axis=0)
        xdot_spline = CubicSpline(times, xdot, axis=0)

        t_end = times[-1]
        now = np.concatenate([x_spline(t_end), xdot_spline(t_end)]).reshape(2, -1)
        before = np.concatenate([x_spline(t_end - period), xdot_spline(t_end - period)]).reshape(2, -1)
        residual = float(np.max(np.linalg.norm(now - before, axis=0)))
        if residual > tolerance:
            raise NoLimitCycle(
                f"orbit closure residual {residual:.3e} exceeds {tolerance:.1e} after {settle_periods} periods"
            )

        t_zero = _upward_crossing(times, x[:, 0], x_spline, times[0] + period)
        theta = TWO_PI * np.arange(samples_per_period) / samples_per_period
        sample_times = t_zero + theta / params.omega0

        atlas = LimitCycleAtlas(
            theta=theta,
            x=x_spline(sample_times).T,
            xdot=xdot_spline(sample_times).T,
            period=period,
            omega0=params.omega0,
            time_origin=float(np.mod(t_zero, period)),
            closure_residual=residual,
        )
        logger.info(f"Limit cycle found: residual={residual:.3e}, time_origin={atlas.time_origin:.4f}")
        return atlas

    except NoLimitCycle as e:
        logger.error(f"Assumption of a stable gait orbit violated: {e}", exc_info=True)
        raise


def _upward_crossing(times: np.ndarray, x1: np.ndarray, spline: CubicSpline, t_limit: float) -> float:
    candidates = np.nonzero((x1[:-1] < 0.0) & (x1[1:] >= 0.0) & (times[:-1] < t_limit))[0]
    if candidates.size == 0:
        raise NoLimitCycle("x_1 has no upward zero crossing on the settled orbit")
    i = int(candidates[0])
    return float(brentq(lambda t: spline(t)[0], times[i], times[i + 1]))


def point_of(theta, joint: int, atlas: LimitCycleAtlas) -> tuple:
    """(x_j, xdot_j) on the orbit of ``joint`` (0-based) at phase theta, by periodic linear interpolation."""
    knots = np.append(atlas.theta, TWO_PI)
    x = np.append(atlas.x[joint], atlas.x[joint, 0])
    xdot = np.append(atlas.xdot[joint], atlas.xdot[joint, 0])
    wrapped = wrap(theta)
    return np.interp(wrapped, knots, x), np.interp(wrapped, knots, xdot)


def phase_of(point, joint: int, atlas: LimitCycleAtlas, stride: int = 8) -> float:
    """Phase of the orbit point nearest to ``point`` in the scaled (x, xdot / omega0) plane."""
    x, xdot = float(point[0]), float(point[1])
    scale = 1.0 / atlas.omega0
    distance = (atlas.x[joint] - x) ** 2 + ((atlas.xdot[joint] - xdot) * scale) ** 2

    K = atlas.samples
    stride = max(1, min(stride, K // 4))
    coarse = int(np.argmin(distance[::stride])) * stride
    window = np.mod(coarse + np.arange(-stride, stride + 1), K)
    best = int(window[np.argmin(distance[window])])

    def objective(theta: float) -> float:
        px, pxdot = point_of(theta, joint, atlas)
        return float((px - x) ** 2 + ((pxdot - xdot) * scale) ** 2)

    spacing = TWO_PI / K
    centre = atlas.theta[best]
    result = minimize_scalar(objective, bounds=(centre - spacing, centre + spacing),
                             method="bounded", options={"xatol": 1e-10})
    return float(wrap(result.x))


def atlas_state(atlas: LimitCycleAtlas, theta: float, psi: float, params: RobotParams) -> RobotState:
    """State on the limit cycle at phase theta, with the torque clock aligned to that phase."""
    x = np.array([point_of(theta, j, atlas)[0] for j in range(atlas.joints)])
    xdot = np.array([point_of(theta, j, atlas)[1] for j in range(atlas.joints)])
    t = atlas.time_origin + float(wrap(theta)) / atlas.omega0
    return initial_state(params, x=x, xdot=xdot, psi=psi, t=t)


def drive_phase(atlas: LimitCycleAtlas, t: float) -> float:
    """Gait phase the torque drive has reached at time t; inverse of the clock set by atlas_state."""
    return float(wrap(atlas.omega0 * (t - atlas.time_origin)))


def circular_mean(phases) -> float:
    return float(wrap(np.angle(np.mean(np.exp(1j * np.asarray(phases))))))


def circular_difference(a, b):
    """a - b mapped to (-pi, pi]."""
    return np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b))))


def phase_tracking_error(estimates, truth) -> float:
    """Circular RMSE between two phase traces after removing their mean offset."""
    difference = circular_difference(estimates, truth)
    offset = np.angle(np.mean(np.exp(1j * difference)))
    return float(np.sqrt(np.mean(circular_difference(difference, offset) ** 2)))
