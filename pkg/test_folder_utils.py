# test_folder_utils.py
"""
Tests for output folders, run logging and run manifests
"""
import os
import sys
import json
import logging
from datetime import datetime, timedelta

import pytest

# Add the src directory to the path to find our utils
script_dir = os.path.dirname(os.path.abspath(__file__))
src_dir = os.path.join(script_dir, "src")
if src_dir not in sys.path:
    sys.path.insert(0, src_dir)

from utils.folder_utils import setup_output_directory
from utils.logging_utils import setup_logging
from utils.process_logging import create_run_manifest_start, finish_run_manifest


def test_setup_output_directory(tmp_path):
    out_dir = str(tmp_path / "run")
    paths = setup_output_directory(out_dir)
    assert os.path.isdir(out_dir)
    for key in ("model", "hierarchy", "report", "moves", "gravity_model", "manifest"):
        assert os.path.dirname(paths[key]) == out_dir
    # reusing a folder is fine
    assert setup_output_directory(out_dir) == paths


def test_output_path_that_is_a_file(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(NotADirectoryError):
        setup_output_directory(str(blocker))


def test_setup_logging_writes_log_file(tmp_path):
    logger, log_file = setup_logging(str(tmp_path), "hierflow_test")
    logger.info("hello from the test")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert os.path.dirname(log_file) == str(tmp_path / "logging")
    with open(log_file, encoding="utf-8") as f:
        text = f.read()
    assert "hello from the test" in text
    assert " - INFO - " in text


def test_manifest_life_cycle(tmp_path):
    start = datetime(2026, 1, 2, 3, 4, 5)
    manifest = create_run_manifest_start(str(tmp_path), "fit", {"edges": "e.csv", "nodes": None},
                                         {"seed": 3}, start_time=start)
    with open(tmp_path / "manifest.json", encoding="utf-8") as f:
        running = json.load(f)
    assert running["status"] == "running"
    assert running["inputs"] == {"edges": "e.csv"}
    assert running["run_id"] == "20260102_030405"

    finished = finish_run_manifest(str(tmp_path), manifest, {"model": "model.json"},
                                   end_time=start + timedelta(seconds=90))
    assert finished["duration_seconds"] == 90.0
    with open(tmp_path / "manifest.json", encoding="utf-8") as f:
        done = json.load(f)
    assert done["status"] == "completed"
    assert done["outputs"] == {"model": "model.json"}
    assert done["config"] == {"seed": 3}


def test_failed_manifest_records_error(tmp_path):
    manifest = create_run_manifest_start(str(tmp_path), "cut", {})
    failed = finish_run_manifest(str(tmp_path), manifest, status="failed", error="bad input")
    assert failed["status"] == "failed"
    assert failed["error"] == "bad input"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
