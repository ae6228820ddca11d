"""Continuous-time Q-learning with a linear Hamiltonian over filter particles.

Feature groups, in order: the particle average of Phi(theta_j) for every
joint; per joint j the blocks u_j * avg Phi(theta_j) and
u_{j+1} * avg Phi(theta_j); and u_k^2 / 2 for every link k. Joints are
0-based here: joint j sits between links j and j + 1.
"""

import numpy as np

from src.engine import fourier
from src.models.learning_models import FeatureConfig, LearningConfig, QWeights
from src.models.robot_models import ControlInput
from src.utils.exceptions import NonConvexHamiltonian
from src.utils.logger import logger

CONVEXITY_TOL = 1e-6
POLICY_LIMIT = 0.95


def _controls(u) -> np.ndarray:
    return np.asarray(u.u if isinstance(u, ControlInput) else u, dtype=float)


def averaged_basis(theta_ensembles, cfg: FeatureConfig) -> np.ndarray:
    """Particle average of Phi for every joint, shape (n-1, M_F)."""
    theta = np.asarray(theta_ensembles, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != cfg.joints:
        raise ValueError(f"expected phases of shape ({cfg.joints}, N), got {theta.shape}")
    return fourier.evaluate(theta, cfg.Phi).mean(axis=-1).T


def _assemble(avg: np.ndarray, u: np.ndarray) -> np.ndarray:
    paired = np.stack([u[:-1, None] * avg, u[1:, None] * avg], axis=1)
    return np.concatenate([avg.ravel(), paired.ravel(), 0.5 * u**2])


def features(theta_ensembles, u, cfg: FeatureConfig) -> np.ndarray:
    """Feature vector of length M for particle phases (n-1, N) and control u."""
    u = _controls(u)
    if u.shape != (cfg.n,):
        raise ValueError(f"control must have length {cfg.n}, got shape {u.shape}")
    return _assemble(averaged_basis(theta_ensembles, cfg), u)


def hamiltonian(theta_ensembles, u, w: QWeights, cfg: FeatureConfig) -> float:
    """Learned Hamiltonian w . phi(theta, u).

    Args:
        theta_ensembles: Particle phases, shape (n-1, N)
        u: Control, a ControlInput or an array of n entries
        w (QWeights): Hamiltonian weights
        cfg (FeatureConfig): Feature layout

    Returns:
        float: Value of the Hamiltonian
    """
    return float(w.vector @ features(theta_ensembles, u, cfg))


def minimize_hamiltonian(theta_ensembles, w: QWeights, cfg: FeatureConfig) -> tuple[ControlInput, float]:
    """Closed-form minimizer of the Hamiltonian over the control.

    Link k only sees the phases of its neighbouring joints k - 1 and k:
    u*_k = -(a_k . avg Phi(theta_k) + b_{k-1} . avg Phi(theta_{k-1})) / w3_k,
    with the missing blocks at the chain ends taken as zero.

    Args:
        theta_ensembles: Particle phases, shape (n-1, N)
        w (QWeights): Hamiltonian weights
        cfg (FeatureConfig): Feature layout

    Returns:
        tuple[ControlInput, float]: Minimizer u* and the minimum value

    Raises:
        NonConvexHamiltonian: If any quadratic weight is not above 1e-6
    """
    if np.any(w.w3 <= CONVEXITY_TOL):
        logger.error(f"Quadratic weights lost positivity: w3={w.w3.tolist()}")
        raise NonConvexHamiltonian(f"w3 must exceed {CONVEXITY_TOL}, got min {float(np.min(w.w3)):.3e}")

    avg = averaged_basis(theta_ensembles, cfg)
    linear = np.zeros(cfg.n)
    linear[:-1] += np.sum(w.a_blocks(cfg.M_F) * avg, axis=1)
    linear[1:] += np.sum(w.b_blocks(cfg.M_F) * avg, axis=1)
    u_star = -linear / w.w3
    return ControlInput(u=u_star), float(w.vector @ _assemble(avg, u_star))


def bellman_error(H_min_next: float, H_min_now: float, cost_now: float, H_now: float, gamma: float, dt: float) -> float:
    """E = (H_min_next - H_min_now) / dt + gamma (cost_now - H_now)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return (H_min_next - H_min_now) / dt + gamma * (cost_now - H_now)


def bellman_gradient(phi_star_next: np.ndarray, phi_star_now: np.ndarray, phi_now: np.ndarray,
                     gamma: float, dt: float) -> np.ndarray:
    """Semi-gradient of E in w, with the minimizers held fixed."""
    return (phi_star_next - phi_star_now) / dt - gamma * phi_now


def update_q_weights(w: QWeights, E: float, grad: np.ndarray, alpha: float, dt: float) -> QWeights:
    """w <- w - dt alpha E grad."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return w.with_vector(w.vector - dt * alpha * E * np.asarray(grad, dtype=float))


def exploration_input(t: float, cfg: LearningConfig, n: int, omega0: float = 1.0) -> ControlInput:
    """Sum of two sinusoids with incommensurate frequencies sqrt(2) omega0 and pi omega0."""
    offsets = np.arange(1, n + 1) * np.pi / 5.0
    u = cfg.A * np.sin(np.sqrt(2.0) * omega0 * t + offsets) + cfg.A * np.sin(np.pi * omega0 * t + offsets)
    return ControlInput(u=u)


def stage_cost(psi_next: float, psi_now: float, u, epsilon: float, dt: float, sign: float = 1.0) -> float:
    """sign * (psi_next - psi_now) / dt + |u|^2 / (2 epsilon).

    With sign = +1 a decreasing psi (clockwise turn) lowers the cost.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = _controls(u)
    return sign * (psi_next - psi_now) / dt + float(u @ u) / (2.0 * epsilon)


def init_q_weights(cfg: FeatureConfig, rng: np.random.Generator) -> QWeights:
    """Group 1 and 2 weights from U[-0.1, 0.1], quadratic weights from U[0.09, 0.11]."""
    size = cfg.joints * cfg.M_F
    w1 = rng.uniform(-0.1, 0.1, size)
    w2 = rng.uniform(-0.1, 0.1, 2 * size)
    w3 = rng.uniform(0.09, 0.11, cfg.n)
    return QWeights(w1=w1, w2=w2, w3=w3)


def clamp_control(u: ControlInput, limit: float = POLICY_LIMIT) -> tuple[ControlInput, bool]:
    """Clip every entry to [-limit, limit]; the flag reports whether anything changed."""
    clipped = np.clip(u.u, -limit, limit)
    return ControlInput(u=clipped), bool(np.any(clipped != u.u))
