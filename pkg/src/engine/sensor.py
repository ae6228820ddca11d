"""Noisy joint sensors and the learned per-joint observation model."""

from typing import Sequence

import numpy as np

from src.engine import fourier
from src.models.robot_models import RobotState
from src.models.sensor_models import SensorConfig


def true_observation(state: RobotState, cfg: SensorConfig) -> np.ndarray:
    """Noise-free observation function value of every joint."""
    return state.x if cfg.h_true == "x" else state.xdot


def observe(state: RobotState, dt: float, cfg: SensorConfig, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """Observation increments dZ_j = h(x_j) dt + sigma_W sqrt(dt) xi_j.

    Args:
        state (RobotState): Current robot state
        dt (float): Step size [s]
        cfg (SensorConfig): Sensor settings
        rngs (Sequence[np.random.Generator]): One noise stream per joint

    Returns:
        np.ndarray: Increments, shape (n-1,)
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    h = true_observation(state, cfg)
    if len(rngs) != h.shape[0]:
        raise ValueError(f"expected {h.shape[0]} noise streams, got {len(rngs)}")
    noise = np.array([rng.standard_normal() for rng in rngs])
    return h * dt + cfg.sigma_W * np.sqrt(dt) * noise


def h_approx(theta, r_j: np.ndarray, cfg: SensorConfig) -> np.ndarray:
    """Learned observation function r_j . phi_h(theta)."""
    return np.asarray(r_j) @ fourier.evaluate(theta, cfg.basis)


def update_sensor_weights(
    r_j: np.ndarray, dZ_j: float, h_hat_j: float, theta_j: np.ndarray, alpha_h: float, dt: float, cfg: SensorConfig
) -> np.ndarray:
    """One stochastic-gradient step on the innovation: r + alpha_h (dZ - h_hat dt) mean phi_h(theta^i)."""
    innovation = dZ_j - h_hat_j * dt
    return np.asarray(r_j) + alpha_h * innovation * fourier.evaluate(theta_j, cfg.basis).mean(axis=1)


def observation_rmse(r_j: np.ndarray, thetas, truths, cfg: SensorConfig) -> float:
    """RMS difference between the learned model and true observations along a phase trace."""
    predicted = h_approx(np.asarray(thetas), r_j, cfg)
    return float(np.sqrt(np.mean((predicted - np.asarray(truths)) ** 2)))
