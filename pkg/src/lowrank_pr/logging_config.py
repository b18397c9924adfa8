import logging
import os
from datetime import datetime


def setup_logging(level="INFO", output_dir=None):
    """
    Set up logging configuration for the lowrank_pr command-line tools.

    Args:
        level (str): The logging level to use.
            Acceptable values are "INFO", "DEBUG", "WARN", and "ERROR".
            Defaults to "INFO".
        output_dir (str, optional): Directory where the log file is written. When None,
            records go to stderr instead of a file.

    Raises:
        ValueError: If an invalid logging level is provided.

    The log file name is the current date and time, so repeated experiment runs
    writing into the same output directory keep separate logs.
    """
    level_map = {
        "INFO": logging.INFO,
        "DEBUG": logging.DEBUG,
        "WARN": logging.WARNING,
        "ERROR": logging.ERROR
    }
    if level not in level_map:
        raise ValueError(f"Invalid logging level: {level}")

    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    if output_dir is None:
        logging.basicConfig(level=level_map[level], format=log_format, force=True)
    else:
        os.makedirs(output_dir, exist_ok=True)
        log_filename = os.path.join(
            output_dir, f"{datetime.now().strftime('%Y-%m-%d_%H-%M-%S')}.log"
        )
        logging.basicConfig(
            level=level_map[level],
            format=log_format,
            filename=log_filename,
            filemode='a',
            force=True
        )
    logging.info("Logging initialized.")
