"""Feedback particle filter for one joint oscillator, with a Galerkin gain."""

import warnings
from typing import Callable

import numpy as np

from src.engine import fourier
from src.engine.phase_reduction import wrap
from src.engine.sensor import h_approx
from src.models.filter_models import GainSolution, ParticleEnsemble
from src.models.sensor_models import SensorConfig
from src.utils.exceptions import IllConditionedGain, NonFinite
from src.utils.logger import logger

CONDITION_LIMIT = 1e10
RIDGE = 1e-8


def init_particles(N: int, delta: float, omega0: float, rng: np.random.Generator) -> ParticleEnsemble:
    """Uniform phases on [0, 2pi) and frequencies on [omega0 - delta, omega0 + delta]."""
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    if not 0.0 <= delta < omega0:
        raise ValueError(f"delta must satisfy 0 <= delta < omega0, got delta={delta}, omega0={omega0}")
    theta = rng.uniform(0.0, 2.0 * np.pi, N)
    omega = rng.uniform(omega0 - delta, omega0 + delta, N)
    return ParticleEnsemble(theta=theta, omega=omega)


def galerkin_gain(theta: np.ndarray, r_j: np.ndarray, cfg: SensorConfig, basis: tuple[str, ...]) -> GainSolution:
    """Solve the weak-form Poisson equation for the gain over a Fourier basis.

    Args:
        theta (np.ndarray): Particle phases
        r_j (np.ndarray): Learned observation weights of the joint
        cfg (SensorConfig): Sensor settings holding the observation basis
        basis (tuple[str, ...]): Gain basis terms

    Returns:
        GainSolution: Coefficients such that K(theta) = sum kappa_l psi_l'(theta)

    Raises:
        ValueError: If there are not more particles than basis terms
    """
    N = theta.shape[0]
    if N <= len(basis):
        raise ValueError(f"need more particles ({N}) than gain basis terms ({len(basis)})")

    h_values = h_approx(theta, r_j, cfg)
    h_hat = float(np.mean(h_values))
    psi = fourier.evaluate(theta, basis)
    dpsi = fourier.derivative(theta, basis)
    A = dpsi @ dpsi.T / N
    b = psi @ (h_values - h_hat) / N

    # A is symmetric positive semi-definite, eigenvalues ascending
    eigenvalues = np.linalg.eigvalsh(A)
    condition = float(eigenvalues[-1] / eigenvalues[0]) if eigenvalues[0] > 0 else float("inf")
    regularized = condition > CONDITION_LIMIT
    if regularized:
        logger.debug(f"Galerkin matrix condition {condition:.3e} above limit, using ridge {RIDGE}")
        # constant text so the warnings registry reports each call site once
        warnings.warn("ill-conditioned gain matrix, ridge fallback used", IllConditionedGain, stacklevel=2)
        A = A + RIDGE * np.eye(len(basis))

    kappa = np.linalg.solve(A, b)
    return GainSolution(kappa=kappa, basis=tuple(basis), condition=condition, regularized=regularized, h_hat=h_hat)


def gain_at(theta, gain: GainSolution) -> np.ndarray:
    """Evaluate the gain K(theta) = sum kappa_l psi_l'(theta).

    Args:
        theta: Phase or array of phases [rad]
        gain (GainSolution): Galerkin coefficients and their basis

    Returns:
        np.ndarray: Gain at every phase, same shape as theta
    """
    return gain.kappa @ fourier.derivative(theta, gain.basis)


def fpf_step(
    ensemble: ParticleEnsemble,
    dZ_j: float,
    r_j: np.ndarray,
    dt: float,
    sensor: SensorConfig,
    basis: tuple[str, ...],
    gain: GainSolution | None = None,
) -> ParticleEnsemble:
    """Advance every particle by one step of the filter SDE.

    theta <- theta + omega dt + K(theta) / sigma_W^2 (dZ - (h(theta) + h_hat) / 2 dt), wrapped.
    A precomputed ``gain`` for the same particles and weights may be passed in.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    h_values = h_approx(ensemble.theta, r_j, sensor)
    if gain is None:
        gain = galerkin_gain(ensemble.theta, r_j, sensor, basis)
    innovation = dZ_j - 0.5 * (h_values + gain.h_hat) * dt
    theta = ensemble.theta + ensemble.omega * dt + gain_at(ensemble.theta, gain) / sensor.sigma_W**2 * innovation
    if not np.all(np.isfinite(theta)):
        raise NonFinite("particle phases became non-finite")
    return ParticleEnsemble(theta=wrap(theta), omega=ensemble.omega)


def posterior_mean(ensemble: ParticleEnsemble, f: Callable[[np.ndarray], np.ndarray]):
    """Particle average of f(theta)."""
    return np.mean(f(ensemble.theta), axis=-1)
