"""Experiment orchestration: open-loop baseline, the learning loop and policy evaluation.

One learning step runs, in order: exploration input, simulator step,
observation, sensor-weight update and filter update for every joint,
stage cost, Bellman error and the Q-weight update.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from src.engine import export
from src.engine.dynamics import initial_state, rollout, step
from src.engine.fpf import galerkin_gain, fpf_step, init_particles
from src.engine.phase_reduction import atlas_state, circular_mean, drive_phase, find_limit_cycle, phase_of
from src.engine.q_learning import (
    bellman_error, bellman_gradient, clamp_control, exploration_input, features, init_q_weights,
    minimize_hamiltonian, stage_cost, update_q_weights, CONVEXITY_TOL,
)
from src.engine.sensor import h_approx, observe, true_observation, update_sensor_weights
from src.models.experiment_models import (
    EvaluationResult, ExperimentConfig, LearningResult, OpenLoopResult, RunTrace,
)
from src.models.filter_models import FilterBank, GainSolution
from src.models.learning_models import EpisodeLog, QWeights
from src.models.limit_cycle_models import LimitCycleAtlas
from src.models.robot_models import ControlInput, RobotState
from src.models.sensor_models import SensorWeights
from src.utils.exceptions import ConfigError, NonConvexHamiltonian, NumericalFailure
from src.utils.logger import logger


@dataclass
class RandomStreams:
    """Independent generators spawned from the master seed."""
    sensor: list[np.random.Generator]
    particles: list[np.random.Generator]
    weights: np.random.Generator
    reinit: np.random.Generator


def derive_streams(seed: int, joints: int) -> RandomStreams:
    sensor_seq, particle_seq, weight_seq, reinit_seq = np.random.SeedSequence(seed).spawn(4)
    return RandomStreams(
        sensor=[np.random.default_rng(s) for s in sensor_seq.spawn(joints)],
        particles=[np.random.default_rng(s) for s in particle_seq.spawn(joints)],
        weights=np.random.default_rng(weight_seq),
        reinit=np.random.default_rng(reinit_seq),
    )


def init_bank(cfg: ExperimentConfig, streams: RandomStreams) -> FilterBank:
    joints = cfg.robot.n - 1
    ensembles = [
        init_particles(cfg.filter.N, cfg.filter.delta, cfg.robot.omega0, streams.particles[j])
        for j in range(joints)
    ]
    return FilterBank(ensembles=ensembles, weights=SensorWeights.zeros(joints, cfg.sensor))


def random_start(atlas: LimitCycleAtlas, cfg: ExperimentConfig, rng: np.random.Generator,
                 clock: Optional[float] = None, jitter: Optional[float] = None) -> RobotState:
    """State on the limit cycle with uniform heading and r_cm at the origin.

    Without a clock the phase is uniform. With one, the robot restarts at
    the gait phase the torque drive has reached at that time, shifted by a
    uniform offset of at most ``jitter`` (``learning.reinit_jitter`` by default).
    """
    if clock is None:
        theta = rng.uniform(0.0, 2.0 * np.pi)
    else:
        jitter = cfg.learning.reinit_jitter if jitter is None else jitter
        theta = drive_phase(atlas, clock) + rng.uniform(-jitter, jitter)
    psi = rng.uniform(0.0, 2.0 * np.pi)
    return atlas_state(atlas, theta, psi, cfg.robot)


def update_filters(
    bank: FilterBank, dZ: np.ndarray, cfg: ExperimentConfig, executor: Optional[ThreadPoolExecutor] = None
) -> list[GainSolution]:
    """Sensor-weight update and filter step, independently for every joint.

    Gain, h_hat and the particle update all use the weights held at the
    start of the step; the updated weights take effect on the next one.
    The bank is updated in place; the per-joint gains are returned.
    """
    dt = cfg.learning.dt
    alpha_h = bank.weights.alpha_h

    def update_joint(j: int):
        ensemble, r_j = bank.ensembles[j], bank.weights.r[j]
        gain = galerkin_gain(ensemble.theta, r_j, cfg.sensor, cfg.filter.gain_basis)
        r_new = update_sensor_weights(r_j, dZ[j], gain.h_hat, ensemble.theta, alpha_h, dt, cfg.sensor)
        return r_new, fpf_step(ensemble, dZ[j], r_j, dt, cfg.sensor, cfg.filter.gain_basis, gain=gain), gain

    joints = range(bank.joints)
    results = list(executor.map(update_joint, joints)) if executor is not None else [update_joint(j) for j in joints]
    bank.weights = SensorWeights(r=np.array([r for r, _, _ in results]), alpha_h=alpha_h)
    bank.ensembles = [ensemble for _, ensemble, _ in results]
    return [gain for _, _, gain in results]


def _record(trace: RunTrace, t: float, bank: FilterBank, gains: list[GainSolution], dZ: np.ndarray,
            state: RobotState, atlas: LimitCycleAtlas, cfg: ExperimentConfig, detail: bool, sample: bool) -> None:
    h_true = true_observation(state, cfg.sensor)
    for j, gain in enumerate(gains):
        if sample:
            trace.weights.append((t, j + 1, *bank.weights.r[j].tolist()))
            trace.gains.append((t, j + 1, gain.condition, float(np.linalg.norm(gain.kappa))))
            logger.debug(f"t={t:.2f} joint={j + 1} cond(A)={gain.condition:.3e} |kappa|={np.linalg.norm(gain.kappa):.4f}")
        if detail:
            ensemble = bank.ensembles[j]
            trace.observations.append((t, j + 1, float(dZ[j])))
            trace.tracking.append((
                t, j + 1, float(state.x[j]), float(state.xdot[j]), float(h_true[j]),
                float(np.mean(h_approx(ensemble.theta, bank.weights.r[j], cfg.sensor))),
                circular_mean(ensemble.theta), phase_of((state.x[j], state.xdot[j]), j, atlas),
            ))
            if sample:
                trace.particles.extend(
                    (t, j + 1, i + 1, float(theta), float(omega))
                    for i, (theta, omega) in enumerate(zip(ensemble.theta, ensemble.omega))
                )


@dataclass
class StepRecord:
    """Every intermediate quantity of one learning step."""
    u: np.ndarray
    dZ: np.ndarray
    theta_now: np.ndarray
    theta_next: np.ndarray
    r_next: np.ndarray
    cost: float
    H_now: float
    H_min_now: float
    H_min_next: float
    E: float
    grad: np.ndarray
    weights: QWeights


class Learner:
    """Stateful runner of the learning loop, one step at a time.

    Particles, sensor weights and Q-weights persist across episodes; the
    robot is re-initialized on the limit cycle at the start of each one.
    The first episode starts at a uniform phase, later ones at the phase
    the gait drive has reached, within ``learning.reinit_jitter``, so the
    persisting particles stay locked. Exploration time runs on across episodes.
    """

    def __init__(self, cfg: ExperimentConfig, atlas: LimitCycleAtlas, streams: Optional[RandomStreams] = None,
                 weights: Optional[QWeights] = None, bank: Optional[FilterBank] = None):
        self.cfg = cfg
        self.atlas = atlas
        self.feature_cfg = cfg.feature_config
        self.streams = streams or derive_streams(cfg.run.seed, cfg.robot.n - 1)
        self.bank = bank or init_bank(cfg, self.streams)
        self.weights = weights or init_q_weights(self.feature_cfg, self.streams.weights)
        self.trace = RunTrace()
        self.clock = 0.0
        self.state: Optional[RobotState] = None
        self.episode = 0
        self.detail = False
        self._steps_taken = 0
        self._errors: list[float] = []
        self._costs: list[float] = []
        self._psi: list[float] = []
        workers = cfg.filter.workers
        self._executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()

    def start_episode(self, detail: bool = False) -> None:
        self.episode += 1
        self.detail = detail
        clock = self.state.t if self.state is not None else None
        self.state = random_start(self.atlas, self.cfg, self.streams.reinit, clock=clock)
        self.bank.clock = self.state.t
        self._steps_taken = 0
        self._errors, self._costs, self._psi = [], [], [self.state.psi]

    def learn_step(self) -> StepRecord:
        cfg, dt = self.cfg, self.cfg.learning.dt
        u = exploration_input(self.clock, cfg.learning, cfg.robot.n, cfg.robot.omega0)
        state_next = step(self.state, u, cfg.robot, dt)
        dZ = observe(state_next, dt, cfg.sensor, self.streams.sensor)

        theta_now = self.bank.phases()
        gains = update_filters(self.bank, dZ, cfg, self._executor)
        theta_next = self.bank.phases()

        cost = _stage_cost(state_next.psi, self.state.psi, u, cfg)
        u_star_now, H_min_now = minimize_hamiltonian(theta_now, self.weights, self.feature_cfg)
        u_star_next, H_min_next = minimize_hamiltonian(theta_next, self.weights, self.feature_cfg)
        phi_now = features(theta_now, u, self.feature_cfg)
        H_now = float(self.weights.vector @ phi_now)
        E = bellman_error(H_min_next, H_min_now, cost, H_now, cfg.learning.gamma, dt)
        grad = bellman_gradient(features(theta_next, u_star_next, self.feature_cfg),
                                features(theta_now, u_star_now, self.feature_cfg),
                                phi_now, cfg.learning.gamma, dt)
        self.weights = update_q_weights(self.weights, E, grad, cfg.learning.alpha, dt)

        self._steps_taken += 1
        self.clock += dt
        sample = self._steps_taken % cfg.run.trace_stride == 0
        _record(self.trace, self.clock, self.bank, gains, dZ, state_next, self.atlas, cfg, self.detail, sample)
        self.state = state_next
        self.bank.clock = state_next.t
        self._errors.append(E)
        self._costs.append(cost)
        self._psi.append(state_next.psi)
        return StepRecord(u=u.u, dZ=dZ, theta_now=theta_now, theta_next=theta_next, r_next=self.bank.weights.r.copy(),
                          cost=cost, H_now=H_now, H_min_now=H_min_now, H_min_next=H_min_next, E=E, grad=grad,
                          weights=self.weights)

    def finish_episode(self) -> EpisodeLog:
        return EpisodeLog(
            episode=self.episode,
            dt=self.cfg.learning.dt,
            horizon=self.cfg.learning.n_T * self.cfg.robot.period,
            bellman_errors=self._errors,
            costs=self._costs,
            psi_trace=self._psi,
            weight_snapshot=self.weights,
            sensor_weights=self.bank.weights.r.copy(),
        )

    def run_episode(self, detail: bool = False) -> EpisodeLog:
        self.start_episode(detail)
        for k in range(self.cfg.steps_per_episode):
            try:
                self.learn_step()
            except (NumericalFailure, ValueError) as e:
                logger.error(f"Learning failed in episode {self.episode} at step {k}: {e}", exc_info=True)
                if isinstance(e, NonConvexHamiltonian):
                    logger.error(f"Weights at failure: w3={self.weights.w3.tolist()}")
                e.add_note(f"episode {self.episode}, step {k}")
                raise
        log = self.finish_episode()
        logger.info(
            f"Episode {log.episode} finished: e_j={episode_error(log):.6f}, net dpsi={log.net_dpsi:.4f}, "
            f"mean cost={log.mean_cost:.4f}"
        )
        return log


def _stage_cost(psi_next: float, psi_now: float, u: ControlInput, cfg: ExperimentConfig) -> float:
    return stage_cost(psi_next, psi_now, u, cfg.learning.epsilon, cfg.learning.dt, cfg.learning.cost_sign)


def episode_error(log: EpisodeLog) -> float:
    """Time average of the squared Bellman error over the nominal episode length."""
    if log.steps == 0:
        raise ValueError("episode log is empty")
    return log.mean_squared_error


def run_open_loop(cfg: ExperimentConfig, periods: int, verify: bool = True, initial: Optional[RobotState] = None,
                  out_dir: Optional[Path] = None) -> OpenLoopResult:
    """Drive the chain with the gait torque alone (u = 0).

    Args:
        cfg (ExperimentConfig): Experiment settings
        periods (int): Number of gait periods to simulate
        verify (bool): Extract the limit cycle first and fail if there is none
        initial (Optional[RobotState]): Start state, rest by default
        out_dir (Optional[Path]): When given, trajectory (and atlas) CSVs are written there

    Returns:
        OpenLoopResult: Simulated states and the atlas when verified

    Raises:
        NoLimitCycle: If verification finds no closed orbit
    """
    if periods < 1:
        raise ValueError(f"periods must be at least 1, got {periods}")
    try:
        atlas = find_limit_cycle(cfg.robot, dt=cfg.learning.dt) if verify else None
        state = initial if initial is not None else initial_state(cfg.robot)
        steps = int(round(periods * cfg.robot.period / cfg.learning.dt))
        states = rollout(state, cfg.robot, cfg.learning.dt, steps)
        result = OpenLoopResult(states=states, atlas=atlas)
        logger.info(f"Open loop: {periods} periods, net displacement={result.net_displacement:.4f}, "
                    f"net dpsi={result.net_dpsi:.4f}")
        if out_dir is not None:
            export.write_trajectory(states, cfg.robot, Path(out_dir) / export.OPEN_LOOP_TRAJECTORY)
            if atlas is not None:
                export.write_atlas(atlas, Path(out_dir))
        return result

    except NumericalFailure as e:
        logger.error(f"Open-loop run failed: {e}", exc_info=True)
        raise


def run_learning(cfg: ExperimentConfig, atlas: Optional[LimitCycleAtlas] = None,
                 out_dir: Optional[Path] = None) -> LearningResult:
    """Run every learning episode and collect the learned weights, per-episode logs and filter bank."""
    atlas = atlas or find_limit_cycle(cfg.robot, dt=cfg.learning.dt)
    logger.info(f"Learning: {cfg.learning.n_e} episodes of {cfg.steps_per_episode} steps, seed={cfg.run.seed}")
    learner = Learner(cfg, atlas)
    episodes = []
    try:
        for e in range(cfg.learning.n_e):
            episodes.append(learner.run_episode(detail=e == cfg.learning.n_e - 1))
    finally:
        learner.close()

    result = LearningResult(weights=learner.weights, episodes=episodes, bank=learner.bank, atlas=atlas,
                            trace=learner.trace)
    if out_dir is not None:
        export.write_learning(result, cfg, Path(out_dir))
    return result


def load_learned(checkpoint: Path) -> tuple[QWeights, Optional[FilterBank], Optional[LimitCycleAtlas]]:
    """Weights of a checkpoint plus the filter bank and atlas its learning run wrote beside it.

    Args:
        checkpoint (Path): Checkpoint CSV written by a learning run

    Returns:
        tuple: Q-weights, then the filter bank and the atlas, each None when not found

    Raises:
        FileNotFoundError: If the checkpoint does not exist
        ValueError: If one of the files cannot be parsed
    """
    checkpoint = Path(checkpoint)
    weights = export.read_checkpoint(checkpoint)
    run_dir = checkpoint.parent
    bank = export.read_bank(run_dir) if export.has_bank(run_dir) else None
    atlas = export.read_atlas(run_dir) if export.has_atlas(run_dir) else None
    if bank is None:
        logger.warning(f"No filter bank next to {checkpoint}; evaluation will warm up fresh filters")
    return weights, bank, atlas


def run_evaluation(cfg: ExperimentConfig, w: QWeights, periods: Optional[int] = None,
                   bank: Optional[FilterBank] = None, atlas: Optional[LimitCycleAtlas] = None,
                   out_dir: Optional[Path] = None) -> EvaluationResult:
    """Closed-loop rollout with the clamped greedy policy of the learned Hamiltonian.

    Filters and sensor weights keep running on live observations. A filter
    bank from a learning run is copied and the robot starts at the gait
    phase of the bank's clock, where its particles are locked. Without one,
    a fresh bank is warmed up open loop first.

    Raises:
        NonConvexHamiltonian: If any quadratic weight is not positive
    """
    if np.any(w.w3 <= CONVEXITY_TOL):
        raise NonConvexHamiltonian(f"policy weights are not convex: w3={w.w3.tolist()}")
    joints = cfg.robot.n - 1
    if bank is not None and bank.joints != joints:
        raise ConfigError(f"filter bank has {bank.joints} joints, the chain has {joints}")
    if atlas is not None and atlas.joints != joints:
        raise ConfigError(f"atlas has {atlas.joints} joints, the chain has {joints}")
    periods = periods or cfg.evaluation.periods
    dt = cfg.learning.dt
    atlas = atlas or find_limit_cycle(cfg.robot, dt=dt)
    streams = derive_streams(cfg.run.seed, cfg.robot.n - 1)
    feature_cfg = cfg.feature_config
    clock = bank.clock if bank is not None else None
    state = random_start(atlas, cfg, streams.reinit, clock=clock, jitter=0.0)
    trace = RunTrace()
    executor = ThreadPoolExecutor(max_workers=cfg.filter.workers) if cfg.filter.workers > 1 else None

    try:
        if bank is None:
            bank = init_bank(cfg, streams)
            warmup = int(round(cfg.evaluation.warmup_periods * cfg.robot.period / dt))
            for _ in range(warmup):
                state = step(state, None, cfg.robot, dt)
                update_filters(bank, observe(state, dt, cfg.sensor, streams.sensor), cfg, executor)
            bank.clock = state.t
            logger.info(f"Evaluation warm-up finished after {warmup} steps")
        else:
            bank = bank.model_copy(deep=True)
            if bank.clock is None:
                logger.warning("Filter bank carries no clock; the robot starts at a uniform phase")

        steps = int(round(periods * cfg.robot.period / dt))
        states, controls, clamp_events = [state], [], 0
        for k in range(steps):
            u_star, _ = minimize_hamiltonian(bank.phases(), w, feature_cfg)
            u, clamped = clamp_control(u_star, cfg.evaluation.clamp)
            clamp_events += clamped
            state = step(state, u, cfg.robot, dt)
            dZ = observe(state, dt, cfg.sensor, streams.sensor)
            gains = update_filters(bank, dZ, cfg, executor)
            bank.clock = state.t
            _record(trace, (k + 1) * dt, bank, gains, dZ, state, atlas, cfg, detail=True,
                    sample=(k + 1) % cfg.run.trace_stride == 0)
            states.append(state)
            controls.append(u.u)

    except NumericalFailure as e:
        logger.error(f"Evaluation failed: {e}", exc_info=True)
        raise
    finally:
        if executor is not None:
            executor.shutdown()

    if clamp_events:
        logger.warning(f"Policy output clipped to +/-{cfg.evaluation.clamp} on {clamp_events} of {steps} steps")
    result = EvaluationResult(states=states, controls=np.array(controls).reshape(-1, cfg.robot.n),
                              clamp_events=clamp_events, bank=bank, trace=trace)
    logger.info(f"Evaluation: {periods} periods, net dpsi={result.net_dpsi:.4f}, "
                f"mean |u|={result.mean_control_norm:.4f}")
    if out_dir is not None:
        export.write_evaluation(result, cfg, Path(out_dir))
    return result
