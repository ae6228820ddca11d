"""Line plots of exported run artifacts.

Each figure is drawn only when the CSV it needs exists in the output directory.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.engine import export  # noqa: E402
from src.utils.logger import logger  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Saved figure {path}")
    return path


def _limit_cycle(out_dir: Path) -> Path:
    atlas = export.read_atlas(out_dir)
    fig, ax = plt.subplots(figsize=(5, 5))
    for j in range(atlas.joints):
        ax.plot(atlas.x[j], atlas.xdot[j], label=f"joint {j + 1}")
    ax.set_xlabel("x_j [rad]")
    ax.set_ylabel("xdot_j [rad/s]")
    ax.legend()
    return _save(fig, out_dir / "limit_cycle.png")


def _sensor_weights(out_dir: Path) -> Path:
    frame = pd.read_csv(out_dir / export.WEIGHT_TRACE)
    joints = sorted(frame["j"].unique())
    columns = [c for c in frame.columns if c.startswith("r")]
    fig, axes = plt.subplots(len(joints), 1, figsize=(7, 2 * len(joints)), sharex=True, squeeze=False)
    for ax, j in zip(axes[:, 0], joints):
        rows = frame[frame["j"] == j]
        for column in columns:
            ax.plot(rows["t"], rows[column], label=column)
        ax.set_ylabel(f"joint {j}")
    axes[0, 0].legend(loc="upper right")
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, out_dir / "sensor_weights.png")


def _particles(out_dir: Path) -> Path:
    frame = pd.read_csv(out_dir / export.PARTICLES)
    tracking = pd.read_csv(out_dir / export.TRACKING)
    joints = sorted(frame["j"].unique())
    fig, axes = plt.subplots(len(joints), 1, figsize=(7, 2 * len(joints)), sharex=True, squeeze=False)
    for ax, j in zip(axes[:, 0], joints):
        rows = frame[frame["j"] == j]
        ax.scatter(rows["t"], rows["theta"], s=1, alpha=0.3)
        truth = tracking[tracking["j"] == j]
        ax.plot(truth["t"], truth["theta_true"], color="k", linewidth=0.8)
        ax.set_ylabel(f"theta_{j}")
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, out_dir / "particles.png")


def _bellman_error(out_dir: Path) -> Path:
    frame = pd.read_csv(out_dir / export.METRICS)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(frame["episode"], frame["avg_bellman_error"])
    ax.set_xlabel("episode")
    ax.set_ylabel("average squared Bellman error")
    return _save(fig, out_dir / "bellman_error.png")


def _turning(out_dir: Path) -> Path:
    fig, (path_ax, psi_ax) = plt.subplots(1, 2, figsize=(10, 4))
    for name, label in ((export.OPEN_LOOP_TRAJECTORY, "open loop"), (export.EVALUATION_TRAJECTORY, "learned policy")):
        if not _has_rows(out_dir / name):
            continue
        frame = export.read_trajectory(out_dir / name)
        path_ax.plot(frame["xcm"], frame["ycm"], label=label)
        psi_ax.plot(frame["t"] - frame["t"].iloc[0], frame["psi"] - frame["psi"].iloc[0], label=label)
    path_ax.set_xlabel("x_cm [m]")
    path_ax.set_ylabel("y_cm [m]")
    path_ax.axis("equal")
    psi_ax.set_xlabel("t [s]")
    psi_ax.set_ylabel("psi - psi(0) [rad]")
    psi_ax.legend()
    return _save(fig, out_dir / "turning.png")


def _has_rows(path: Path) -> bool:
    return path.exists() and not pd.read_csv(path, comment="#", nrows=1).empty


FIGURES = (
    ((export.atlas_file(1),), _limit_cycle),
    ((export.WEIGHT_TRACE,), _sensor_weights),
    ((export.PARTICLES, export.TRACKING), _particles),
    ((export.METRICS,), _bellman_error),
)


def export_figures(out_dir: Path) -> list[Path]:
    """Render every figure whose source CSVs are present in ``out_dir``."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory {out_dir} does not exist")

    written = []
    for sources, render in FIGURES:
        if all(_has_rows(out_dir / name) for name in sources):
            written.append(render(out_dir))
    if _has_rows(out_dir / export.OPEN_LOOP_TRAJECTORY) or _has_rows(out_dir / export.EVALUATION_TRAJECTORY):
        written.append(_turning(out_dir))
    if not written:
        logger.warning(f"No run artifacts found in {out_dir}; nothing to plot")
    return written
