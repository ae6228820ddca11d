"""Snake Lab Entry Point.

Runs the command-line interface defined in src.tools.cli.

Usage:
    python main.py learn --episodes 5 --out runs/quick

Or with uv:
    uv run main.py serve

The ``serve`` subcommand exposes the same operations as MCP tools over stdio.
"""

from src.tools.cli import app


def run_cli() -> None:
    """Run the Snake Lab command-line interface.

    Raises:
        SystemExit: With code 2 on configuration errors and 3 on numerical failures
    """
    app()


if __name__ == "__main__":
    run_cli()
