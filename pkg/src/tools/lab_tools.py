import asyncio
from pathlib import Path
from typing import Optional

import numpy as np

from src.engine import export
from src.engine.harness import episode_error, load_learned, run_evaluation, run_learning, run_open_loop
from src.engine.phase_reduction import find_limit_cycle
from src.models.lab_models import (
    EvaluateParams, EvaluationSummary, LearningSummary, LearnParams, LimitCycleParams, LimitCycleSummary,
    OpenLoopParams, OpenLoopSummary,
)
from src.tools.config import apply_overrides, load_experiment_config, mcp
from src.utils.logger import logger


def _listing(out_dir: Optional[Path]) -> list[str]:
    return sorted(str(p) for p in Path(out_dir).rglob("*.csv")) if out_dir is not None else []


def simulate(params: OpenLoopParams) -> OpenLoopSummary:
    """Open-loop rollout of the gait torque, optionally verifying the limit cycle first."""
    cfg = load_experiment_config(params.config_path)
    out_dir = Path(params.out_dir) if params.out_dir else None
    result = run_open_loop(cfg, params.periods, verify=params.verify, out_dir=out_dir)
    return OpenLoopSummary(
        periods=params.periods,
        steps=len(result.states) - 1,
        net_displacement=result.net_displacement,
        net_dpsi=result.net_dpsi,
        closure_residual=result.atlas.closure_residual if result.atlas is not None else None,
        files=_listing(out_dir),
    )


def limit_cycle(params: LimitCycleParams) -> LimitCycleSummary:
    """Extract the per-joint limit cycle atlas."""
    cfg = load_experiment_config(params.config_path)
    atlas = find_limit_cycle(cfg.robot, settle_periods=params.settle_periods,
                             samples_per_period=params.samples_per_period, dt=cfg.learning.dt)
    files = []
    if params.out_dir:
        files = [str(path) for path in export.write_atlas(atlas, Path(params.out_dir))]
    return LimitCycleSummary(
        joints=atlas.joints,
        samples=atlas.samples,
        period=atlas.period,
        time_origin=atlas.time_origin,
        closure_residual=atlas.closure_residual,
        amplitudes=np.max(np.abs(atlas.x), axis=1).tolist(),
        files=files,
    )


def learn(params: LearnParams) -> LearningSummary:
    """Run the learning loop and write the weight checkpoint, metrics and traces."""
    cfg = apply_overrides(load_experiment_config(params.config_path), seed=params.seed, episodes=params.episodes)
    out_dir = Path(params.out_dir) if params.out_dir else None
    result = run_learning(cfg, out_dir=out_dir)
    return LearningSummary(
        episodes=len(result.episodes),
        first_error=episode_error(result.episodes[0]),
        last_error=episode_error(result.episodes[-1]),
        w3_min=float(np.min(result.weights.w3)),
        files=_listing(out_dir),
    )


def evaluate(params: EvaluateParams) -> EvaluationSummary:
    """Closed-loop rollout of the policy stored in a weight checkpoint."""
    cfg = apply_overrides(load_experiment_config(params.config_path), seed=params.seed, periods=params.periods)
    weights, bank, atlas = load_learned(Path(params.checkpoint_path))
    out_dir = Path(params.out_dir) if params.out_dir else None
    result = run_evaluation(cfg, weights, bank=bank, atlas=atlas, out_dir=out_dir)
    return EvaluationSummary(
        periods=cfg.evaluation.periods,
        net_dpsi=result.net_dpsi,
        mean_control_norm=result.mean_control_norm,
        clamp_events=result.clamp_events,
        final_position=result.states[-1].r_cm.tolist(),
        files=_listing(out_dir),
    )


@mcp.tool()
async def simulate_open_loop(params: OpenLoopParams):
    """Simulate the snake robot driven by its open-loop gait torque only (no friction control).

    When to Use This Tool:
      Checking how far and in which direction the robot travels without control
      Producing a baseline trajectory before learning

    Args:
        params (OpenLoopParams): Simulation parameters including:
            - config_path (str): Optional experiment config file
            - periods (int): Number of gait periods (default: 20)
            - verify (bool): Check the gait settles on a limit cycle first (default: True)
            - out_dir (str): Optional directory for the trajectory CSV

    Returns:
        OpenLoopSummary: Net displacement, net heading change, closure residual and written files

    Raises:
        NoLimitCycle: If verification finds no closed orbit
    """
    try:
        return await asyncio.to_thread(simulate, params)
    except Exception as e:
        logger.error(f"Error occurred while simulating the open loop: {e}", exc_info=True)
        raise


@mcp.tool()
async def extract_limit_cycle(params: LimitCycleParams):
    """Extract the per-joint limit cycle of the open-loop gait.

    Args:
        params (LimitCycleParams): Extraction parameters including:
            - config_path (str): Optional experiment config file
            - samples_per_period (int): Phase samples per joint (default: 256)
            - settle_periods (int): Periods settled from rest before sampling (default: 40)
            - out_dir (str): Optional directory for the per-joint atlas CSVs

    Returns:
        LimitCycleSummary: Period, time origin of phase zero, closure residual and joint amplitudes
    """
    try:
        return await asyncio.to_thread(limit_cycle, params)
    except Exception as e:
        logger.error(f"Error occurred while extracting the limit cycle: {e}", exc_info=True)
        raise


@mcp.tool()
async def learn_policy(params: LearnParams):
    """Learn a turning policy with particle filters and continuous-time Q-learning.

    A full run with default settings takes many minutes; pass a small
    ``episodes`` value for a quick look.

    Args:
        params (LearnParams): Learning parameters including:
            - config_path (str): Optional experiment config file
            - episodes (int): Optional override of the episode count
            - seed (int): Optional override of the master seed
            - out_dir (str): Optional directory for checkpoint, metrics and traces

    Returns:
        LearningSummary: Bellman error of the first and last episode and the smallest quadratic weight
    """
    try:
        return await asyncio.to_thread(learn, params)
    except Exception as e:
        logger.error(f"Error occurred while learning the policy: {e}", exc_info=True)
        raise


@mcp.tool()
async def evaluate_policy(params: EvaluateParams):
    """Run the learned policy from a weight checkpoint in closed loop.

    Args:
        params (EvaluateParams): Evaluation parameters including:
            - checkpoint_path (str): REQUIRED - checkpoint written by learn_policy; the filter bank
              and atlas saved beside it are reused when present
            - config_path (str): Optional experiment config file
            - periods (int): Optional override of the evaluated periods
            - seed (int): Optional override of the master seed
            - out_dir (str): Optional directory for the evaluation outputs

    Returns:
        EvaluationSummary: Net heading change (negative is clockwise), mean control effort and clamp count
    """
    try:
        return await asyncio.to_thread(evaluate, params)
    except Exception as e:
        logger.error(f"Error occurred while evaluating the policy: {e}", exc_info=True)
        raise
