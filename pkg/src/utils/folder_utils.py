# folder_utils.py
"""
Output folder handling for hierflow runs
"""
import os
import logging


def setup_output_directory(out_dir):
    """
    Create the output directory of a run. Existing files are left in place;
    outputs of the same name are overwritten by the run.

    Returns:
        dict: Paths of the standard outputs inside out_dir
    """
    logger = logging.getLogger(__name__)
    if os.path.exists(out_dir) and not os.path.isdir(out_dir):
        raise NotADirectoryError(f"Output path exists and is not a directory: {out_dir}")
    os.makedirs(out_dir, exist_ok=True)
    logger.info(f"Using output directory: {out_dir}")
    return {
        "root": out_dir,
        "model": os.path.join(out_dir, "model.json"),
        "hierarchy": os.path.join(out_dir, "hierarchy.nwk"),
        "report": os.path.join(out_dir, "report.json"),
        "moves": os.path.join(out_dir, "moves.csv"),
        "gravity_model": os.path.join(out_dir, "gravity_model.json"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
