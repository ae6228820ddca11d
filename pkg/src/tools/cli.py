"""Command-line entry point of the snake lab.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures.
"""

from pathlib import Path
from typing import Annotated, Callable, Optional

import typer

from src.engine import export
from src.engine.figures import export_figures
from src.engine.harness import load_learned, run_evaluation, run_learning, run_open_loop
from src.engine.phase_reduction import find_limit_cycle
from src.models.experiment_models import ExperimentConfig
from src.tools.config import OUTPUT_DIR, apply_overrides, dump_experiment_config, load_experiment_config
from src.utils.exceptions import ConfigError, NumericalFailure
from src.utils.logger import logger

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

app = typer.Typer(help="Snake robot simulation, phase filtering and turning-policy learning.", no_args_is_help=True)

ConfigOption = Annotated[Optional[Path], typer.Option("--config", help="Experiment config file (SECTION__FIELD=value lines)")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", min=0, help="Master seed")]
OutOption = Annotated[Optional[Path], typer.Option("--out", help="Output directory")]


def _guarded(action: Callable[[], None]) -> None:
    try:
        action()
    except ConfigError as e:
        logger.error(f"Configuration error: {e}", exc_info=True)
        typer.echo(f"config error: {e}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    except NumericalFailure as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        typer.echo(f"numerical failure: {type(e).__name__}: {e}", err=True)
        raise typer.Exit(code=EXIT_NUMERICAL)


def _prepare(config: Optional[Path], out: Optional[Path], **overrides) -> tuple[ExperimentConfig, Path]:
    cfg = load_experiment_config(config)
    default_out = cfg.run.output_dir if config is not None else OUTPUT_DIR
    cfg = apply_overrides(cfg, output_dir=str(out) if out is not None else default_out, **overrides)
    return cfg, Path(cfg.run.output_dir)


@app.command()
def simulate(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    periods: int = typer.Option(20, "--periods", min=1, help="Gait periods to simulate"),
    verify: bool = typer.Option(True, "--verify/--no-verify", help="Check for a limit cycle first"),
):
    """Simulate the open-loop gait (u = 0) and write the trajectory CSV."""
    def action():
        cfg, out_dir = _prepare(config, out, seed=seed)
        result = run_open_loop(cfg, periods, verify=verify, out_dir=out_dir)
        typer.echo(f"net displacement {result.net_displacement:.4f} m, net dpsi {result.net_dpsi:.4f} rad")

    _guarded(action)


@app.command("limit-cycle")
def limit_cycle(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    periods: int = typer.Option(40, "--periods", min=1, help="Periods settled from rest before sampling"),
    samples: int = typer.Option(256, "--samples", min=8, help="Phase samples per joint"),
):
    """Extract the per-joint limit cycle and write one atlas CSV per joint.

    The extraction is deterministic; the seed is only recorded in the written config.
    """
    def action():
        cfg, out_dir = _prepare(config, out, seed=seed)
        dump_experiment_config(cfg, out_dir / "config.env")
        atlas = find_limit_cycle(cfg.robot, settle_periods=periods, samples_per_period=samples, dt=cfg.learning.dt)
        export.write_atlas(atlas, out_dir)
        typer.echo(f"period {atlas.period:.4f} s, closure residual {atlas.closure_residual:.2e}")

    _guarded(action)


@app.command()
def learn(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    episodes: Optional[int] = typer.Option(None, "--episodes", min=1, help="Number of episodes"),
):
    """Run the learning loop; writes checkpoint, metrics, traces and the effective config."""
    def action():
        cfg, out_dir = _prepare(config, out, seed=seed, episodes=episodes)
        dump_experiment_config(cfg, out_dir / "config.env")
        result = run_learning(cfg, out_dir=out_dir)
        last = result.episodes[-1]
        typer.echo(f"{len(result.episodes)} episodes, last average Bellman error {last.mean_squared_error:.6f}")

    _guarded(action)


@app.command()
def evaluate(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    periods: Optional[int] = typer.Option(None, "--periods", min=1, help="Periods driven by the policy"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Weight checkpoint, defaults to <out>/checkpoint.csv"),
):
    """Roll out the learned policy in closed loop.

    The filter bank and atlas saved next to the checkpoint are picked up when present.
    """
    def action():
        cfg, out_dir = _prepare(config, out, seed=seed, periods=periods)
        path = checkpoint or out_dir / export.CHECKPOINT
        if not path.is_file():
            raise ConfigError(f"checkpoint {path} does not exist")
        try:
            weights, bank, atlas = load_learned(path)
        except ValueError as e:
            raise ConfigError(f"unreadable learning output next to {path}: {e}") from e
        result = run_evaluation(cfg, weights, bank=bank, atlas=atlas, out_dir=out_dir)
        typer.echo(f"net dpsi {result.net_dpsi:.4f} rad, mean |u| {result.mean_control_norm:.4f}, "
                   f"clamped on {result.clamp_events} steps")

    _guarded(action)


@app.command("export-figs")
def export_figs(out: OutOption = None):
    """Render PNG figures from the CSVs in the output directory."""
    def action():
        out_dir = out or Path(OUTPUT_DIR)
        if not out_dir.is_dir():
            raise ConfigError(f"output directory {out_dir} does not exist")
        for path in export_figures(out_dir):
            typer.echo(str(path))

    _guarded(action)


@app.command()
def serve():
    """Serve the lab tools over MCP stdio."""
    from src.tools.server import main

    main()


if __name__ == "__main__":
    app()
