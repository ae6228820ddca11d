from src.tools.config import mcp
from src.utils.logger import logger

# Import tool modules to register them with the MCP server
import src.tools.lab_tools  # noqa: F401


def main() -> None:
    """Run the snake lab MCP server with stdio transport.

    Available Tools:
        - simulate_open_loop: Open-loop gait rollout
        - extract_limit_cycle: Per-joint limit cycle atlas
        - learn_policy: Filter-based Q-learning of a turning policy
        - evaluate_policy: Closed-loop rollout of a learned policy

    Raises:
        Exception: If there's an error starting the server
    """
    logger.info("Starting Snake Lab MCP Server...")

    try:
        mcp.run(transport="stdio")
    except Exception as e:
        logger.error(f"Failed to start MCP server: {e}", exc_info=True)
        raise
