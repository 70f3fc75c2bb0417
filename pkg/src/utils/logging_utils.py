import os
import logging
from datetime import datetime

FILE_FORMAT = '%(asctime)s - %(levelname)s - %(processName)s - %(message)s'
CONSOLE_FORMAT = '%(levelname)s - %(message)s'


def setup_logging(output_dir, program_name="hierflow"):
    """Configure timestamped file logging in a logging subfolder plus a WARNING console handler."""
    logging_dir = os.path.join(output_dir, "logging")
    os.makedirs(logging_dir, exist_ok=True)

    # Timestamp for the filename (e.g., 20250224_153022)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = os.path.join(logging_dir, f"{program_name}_{timestamp}.log")

    file_handler = logging.FileHandler(log_file, mode='w', encoding='utf-8')
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))

    # Replace handlers so repeated calls in one process do not duplicate output
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()
    root_logger.setLevel(logging.INFO)
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    logger = logging.getLogger(program_name)
    logger.info(f"Logging initialized. Log file: {log_file}")
    return logger, log_file
