# process_logging.py
"""
Run manifests: a manifest.json per output folder recording what a command
read, how it was configured, what it wrote and how it ended.
"""
import json
import logging
from pathlib import Path
from datetime import datetime

from config import SCHEMA_VERSION, TOOL_NAME, TOOL_VERSION

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def create_run_manifest_start(out_dir, command, inputs, config=None, start_time=None):
    """
    Write manifest.json with status "running" so an interrupted run is visible.

    Args:
        out_dir (str): Output directory of the run
        command (str): CLI command name (fit, cut, synth, eval)
        inputs (dict): Input role -> path
        config (dict): Effective configuration echo

    Returns:
        dict: The manifest entry, to be passed to finish_run_manifest
    """
    start_time = start_time or datetime.now()
    manifest = {
        "schema": SCHEMA_VERSION,
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
        "command": command,
        "run_id": start_time.strftime("%Y%m%d_%H%M%S"),
        "inputs": {key: str(value) for key, value in (inputs or {}).items() if value is not None},
        "config": config or {},
        "start_time": start_time.isoformat(),
        "end_time": None,
        "duration_seconds": None,
        "outputs": {},
        "status": "running",
        "error": None,
    }
    _write(out_dir, manifest)
    return manifest


def finish_run_manifest(out_dir, manifest, outputs=None, status="completed", error=None, end_time=None):
    """Update the manifest with end time, wall-clock duration, outputs and final status."""
    end_time = end_time or datetime.now()
    manifest = dict(manifest)
    try:
        start_time = datetime.fromisoformat(manifest["start_time"])
        manifest["duration_seconds"] = (end_time - start_time).total_seconds()
    except (KeyError, TypeError, ValueError) as e:
        logger.warning(f"Could not calculate run duration: {e}")
    manifest["end_time"] = end_time.isoformat()
    manifest["outputs"] = {key: str(value) for key, value in (outputs or {}).items()}
    manifest["status"] = status
    manifest["error"] = error
    _write(out_dir, manifest)
    return manifest


def _write(out_dir, manifest):
    path = Path(out_dir) / MANIFEST_NAME
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2)
    except OSError as e:
        # Don't fail the main program if the manifest cannot be written
        logger.warning(f"Could not write run manifest {path}: {e}")
    return path
