"""CSV writers and readers for run artifacts.

Joint and link indices in every file are 1-based.
"""

from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from src.models.experiment_models import EvaluationResult, ExperimentConfig, LearningResult, RunTrace
from src.models.filter_models import FilterBank, ParticleEnsemble
from src.models.learning_models import EpisodeLog, QWeights
from src.models.limit_cycle_models import LimitCycleAtlas
from src.models.robot_models import RobotParams, RobotState
from src.models.sensor_models import SensorWeights
from src.utils.logger import logger

OPEN_LOOP_TRAJECTORY = "trajectory_open_loop.csv"
EVALUATION_TRAJECTORY = "trajectory_evaluation.csv"
EVALUATION_CONTROLS = "controls_evaluation.csv"
ATLAS_PREFIX = "atlas_j"
BANK_PARTICLES = "bank_particles.csv"
BANK_WEIGHTS = "bank_sensor_weights.csv"
WEIGHT_TRACE = "sensor_weights.csv"
OBSERVATIONS = "observations.csv"
PARTICLES = "particles.csv"
GAINS = "gain_diagnostics.csv"
TRACKING = "tracking.csv"
CHECKPOINT = "checkpoint.csv"
METRICS = "metrics.csv"

CHECKPOINT_GROUPS = ("w1", "w2", "w3")


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def _read(path: Path, **kwargs) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip", **kwargs)


def trajectory_frame(states: Iterable[RobotState], n: int) -> pd.DataFrame:
    columns = (
        ["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"qdot{i}" for i in range(1, n + 1)]
        + [f"x{i}" for i in range(1, n)] + ["psi", "xcm", "ycm"]
    )
    rows = [[s.t, *s.q, *s.qdot, *s.x, s.psi, *s.r_cm] for s in states]
    return pd.DataFrame(rows, columns=columns)


def write_trajectory(states: list[RobotState], params: RobotParams, path: Path) -> Path:
    return _write(trajectory_frame(states, params.n), path)


def read_trajectory(path: Path) -> pd.DataFrame:
    return _read(path)


def _write_with_header(frame: pd.DataFrame, meta: dict, path: Path) -> Path:
    """CSV under a one-line "# key=value,..." header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(
        f"{key}={float(value)!r}" if isinstance(value, (float, np.floating)) else f"{key}={value}"
        for key, value in meta.items()
    )
    with open(path, "w", newline="") as handle:
        handle.write(f"# {header}\n")
        frame.to_csv(handle, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def _read_with_header(path: Path) -> tuple[dict[str, str], pd.DataFrame]:
    with open(path) as handle:
        header = handle.readline()
    if not header.startswith("#"):
        raise ValueError(f"{path} has no metadata header")
    meta = dict(item.split("=", 1) for item in header.lstrip("#").strip().split(",") if item)
    return meta, _read(path, comment="#")


def atlas_file(j: int) -> str:
    """File name of the atlas of joint j (1-based)."""
    return f"{ATLAS_PREFIX}{j}.csv"


def write_atlas(atlas: LimitCycleAtlas, out_dir: Path) -> list[Path]:
    """One "theta,x,xdot" file per joint, each under a "# period=..,omega0=..,K=.." header."""
    out_dir = Path(out_dir)
    meta = {
        "period": atlas.period,
        "omega0": atlas.omega0,
        "K": atlas.samples,
        "time_origin": atlas.time_origin,
        "closure_residual": atlas.closure_residual,
    }
    paths = [
        _write_with_header(pd.DataFrame({"theta": atlas.theta, "x": atlas.x[j], "xdot": atlas.xdot[j]}),
                           meta, out_dir / atlas_file(j + 1))
        for j in range(atlas.joints)
    ]
    logger.info(f"Wrote limit cycle atlas ({atlas.joints} joints, K={atlas.samples}) to {out_dir}")
    return paths


def has_atlas(out_dir: Path) -> bool:
    return (Path(out_dir) / atlas_file(1)).is_file()


def read_atlas(out_dir: Path) -> LimitCycleAtlas:
    """Atlas from the per-joint files in ``out_dir``; joints are read until the first missing file."""
    out_dir = Path(out_dir)
    if not has_atlas(out_dir):
        raise FileNotFoundError(f"no limit cycle atlas in {out_dir}")
    tables = []
    while (out_dir / atlas_file(len(tables) + 1)).is_file():
        tables.append(_read_with_header(out_dir / atlas_file(len(tables) + 1)))
    meta = tables[0][0]
    K = int(meta["K"])
    for j, (_, frame) in enumerate(tables, start=1):
        if len(frame) != K:
            raise ValueError(f"atlas of joint {j} has {len(frame)} rows, expected K={K}")
    return LimitCycleAtlas(
        theta=tables[0][1]["theta"].to_numpy(),
        x=np.array([frame["x"].to_numpy() for _, frame in tables]),
        xdot=np.array([frame["xdot"].to_numpy() for _, frame in tables]),
        period=float(meta["period"]),
        omega0=float(meta["omega0"]),
        time_origin=float(meta["time_origin"]),
        closure_residual=float(meta["closure_residual"]),
    )


def write_bank(bank: FilterBank, out_dir: Path) -> list[Path]:
    """Particles ("j,i,theta,omega") and sensor weights ("j,r1..") of a filter bank.

    The weights file carries the bank clock and alpha_h in its header.
    """
    out_dir = Path(out_dir)
    particles = pd.DataFrame(
        [(j + 1, i + 1, float(theta), float(omega))
         for j, ensemble in enumerate(bank.ensembles)
         for i, (theta, omega) in enumerate(zip(ensemble.theta, ensemble.omega))],
        columns=["j", "i", "theta", "omega"],
    )
    r = bank.weights.r
    weights = pd.DataFrame(r, columns=[f"r{m}" for m in range(1, r.shape[1] + 1)])
    weights.insert(0, "j", np.arange(1, r.shape[0] + 1))
    meta = {"alpha_h": bank.weights.alpha_h}
    if bank.clock is not None:
        meta["clock"] = bank.clock
    return [
        _write(particles, out_dir / BANK_PARTICLES),
        _write_with_header(weights, meta, out_dir / BANK_WEIGHTS),
    ]


def has_bank(out_dir: Path) -> bool:
    return (Path(out_dir) / BANK_PARTICLES).is_file() and (Path(out_dir) / BANK_WEIGHTS).is_file()


def read_bank(out_dir: Path) -> FilterBank:
    out_dir = Path(out_dir)
    particles = _read(out_dir / BANK_PARTICLES).sort_values(["j", "i"])
    meta, weights = _read_with_header(out_dir / BANK_WEIGHTS)
    weights = weights.sort_values("j")
    joints = sorted(particles["j"].unique())
    if joints != weights["j"].tolist():
        raise ValueError(f"particle joints {joints} do not match sensor weight joints {weights['j'].tolist()}")
    ensembles = [
        ParticleEnsemble(theta=rows["theta"].to_numpy(), omega=rows["omega"].to_numpy())
        for _, rows in particles.groupby("j", sort=True)
    ]
    r = weights[[c for c in weights.columns if c != "j"]].to_numpy()
    clock = float(meta["clock"]) if "clock" in meta else None
    return FilterBank(ensembles=ensembles, weights=SensorWeights(r=r, alpha_h=float(meta["alpha_h"])), clock=clock)


def write_checkpoint(w: QWeights, path: Path) -> Path:
    """One "group,index,value" row per weight, index 0-based within its group."""
    groups = {"w1": w.w1, "w2": w.w2, "w3": w.w3}
    frame = pd.DataFrame(
        [(name, index, float(value)) for name, values in groups.items() for index, value in enumerate(values)],
        columns=["group", "index", "value"],
    )
    return _write(frame, path)


def read_checkpoint(path: Path) -> QWeights:
    frame = _read(path)
    unknown = set(frame["group"]) - set(CHECKPOINT_GROUPS)
    if unknown:
        raise ValueError(f"unknown weight groups in checkpoint: {sorted(unknown)}")
    groups = {
        name: frame[frame["group"] == name].sort_values("index")["value"].to_numpy()
        for name in CHECKPOINT_GROUPS
    }
    return QWeights(**groups)


def sensor_drift(episodes: list[EpisodeLog]) -> np.ndarray:
    """Largest change of any sensor weight over each episode; NaN where no previous snapshot exists."""
    drift = np.full(len(episodes), np.nan)
    for k in range(1, len(episodes)):
        before, after = episodes[k - 1].sensor_weights, episodes[k].sensor_weights
        if before is not None and after is not None:
            drift[k] = float(np.max(np.abs(after - before)))
    return drift


def metrics_frame(episodes: list[EpisodeLog]) -> pd.DataFrame:
    frame = pd.DataFrame(
        [(log.episode, log.mean_squared_error, log.net_dpsi, log.mean_cost) for log in episodes],
        columns=["episode", "avg_bellman_error", "net_dpsi", "mean_cost"],
    )
    frame["sensor_drift"] = sensor_drift(episodes)
    return frame


def write_metrics(episodes: list[EpisodeLog], path: Path) -> Path:
    return _write(metrics_frame(episodes), path)


def write_trace(trace: RunTrace, M_h: int, out_dir: Path) -> list[Path]:
    """Sensor weights, observations, particles, gain diagnostics and tracking rows of a run."""
    out_dir = Path(out_dir)
    tables = [
        (trace.weights, ["t", "j"] + [f"r{m}" for m in range(1, M_h + 1)], WEIGHT_TRACE),
        (trace.observations, ["t", "j", "dZ"], OBSERVATIONS),
        (trace.particles, ["t", "j", "i", "theta", "omega"], PARTICLES),
        (trace.gains, ["t", "j", "cond_A", "kappa_norm"], GAINS),
        (trace.tracking, ["t", "j", "x", "xdot", "h_true", "h_hat", "theta_mean", "theta_true"], TRACKING),
    ]
    return [_write(pd.DataFrame(rows, columns=columns), out_dir / name) for rows, columns, name in tables]


def write_learning(result: LearningResult, cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [
        *write_atlas(result.atlas, out_dir),
        write_checkpoint(result.weights, out_dir / CHECKPOINT),
        *write_bank(result.bank, out_dir),
        write_metrics(result.episodes, out_dir / METRICS),
    ]
    return paths + write_trace(result.trace, cfg.sensor.M_h, out_dir)


def write_evaluation(result: EvaluationResult, cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    n = cfg.robot.n
    controls = pd.DataFrame(result.controls, columns=[f"u{i}" for i in range(1, n + 1)])
    controls.insert(0, "t", [state.t for state in result.states[1:]])
    paths = [
        write_trajectory(result.states, cfg.robot, out_dir / EVALUATION_TRAJECTORY),
        _write(controls, out_dir / EVALUATION_CONTROLS),
    ]
    return paths + write_trace(result.trace, cfg.sensor.M_h, out_dir / "evaluation")
