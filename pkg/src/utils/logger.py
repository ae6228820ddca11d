import logging
import os

def setup_logger(name: str = "SnakeLab", log_file: str | None = None) -> logging.Logger:
    """Set up and configure a logger for the snake sensorimotor lab.

    This function creates a logger with a file handler configured with
    appropriate formatting for following long simulation and learning runs.

    Args:
        name (str): Name of the logger (default: "SnakeLab")
        log_file (str | None): Path to the log file. Falls back to the
            SNAKE_LAB_LOG_FILE environment variable, then "snake_lab.log"

    Returns:
        logging.Logger: Configured logger instance ready for use

    Example:
        logger = setup_logger()
        logger.info("Episode 1 finished")
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    # Prevent duplicate handlers if function is called multiple times
    if logger.handlers:
        return logger

    log_file = log_file or os.getenv("SNAKE_LAB_LOG_FILE", "snake_lab.log")

    # File handler with DEBUG level
    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(logging.DEBUG)
    file_formatter = logging.Formatter("%(asctime)s - %(filename)s - %(name)s - %(levelname)s - %(message)s")
    file_handler.setFormatter(file_formatter)
    logger.addHandler(file_handler)

    return logger

# Configure default logger instance
logger = setup_logger()
