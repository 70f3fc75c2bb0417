# test_config.py
"""
Tests for fit defaults, user configuration files and worker resolution
"""
import os
import sys
import json

import pytest

# Add src to path to import our modules
src_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "src")
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from hierflow.config_utils import build_fit_config, load_fit_defaults, load_user_config, resolve_worker_count
from hierflow.data_structures import default_ladder
from hierflow.exceptions import InputValidationError


def test_bundled_defaults():
    defaults = load_fit_defaults()
    cfg = build_fit_config()
    assert defaults["objective"] == "poisson-normal"
    assert cfg.objective.kind == "poisson-normal"
    assert cfg.ladder == default_ladder(10)
    assert cfg.bins.mode == "logarithmic" and cfg.bins.count == 12
    assert cfg.mode == "spatial"
    assert cfg.outer_max_sweeps == 100


def test_overrides_and_aliases():
    cfg = build_fit_config({"objective": "ls", "ladder_size": 4, "seed": 9, "mode": "generic",
                            "outer_max_sweeps": None})
    assert cfg.objective.kind == "least-squares"
    assert cfg.ladder == (0.2, 0.4, 0.6, 0.8)
    assert cfg.seed == 9
    assert cfg.outer_max_sweeps == 100
    explicit = build_fit_config({"ladder": [0.1, 0.5, 0.9], "bin_edges": [100, 500, 5000]})
    assert explicit.ladder == (0.1, 0.5, 0.9)
    assert explicit.bins.mode == "explicit"
    assert explicit.bins.edges == (100.0, 500.0, 5000.0)


@pytest.mark.parametrize("overrides", [
    {"colour": "blue"},
    {"ladder": [0.5, 0.2]},
    {"ladder": [0.0, 0.5]},
    {"bin_mode": "explicit"},
    {"objective": "absolute"},
    {"mode": "sideways"},
    {"outer_max_sweeps": 0},
    {"seed": "abc"},
])
def test_invalid_configuration(overrides):
    with pytest.raises(InputValidationError):
        build_fit_config(overrides)


def test_user_config_file(tmp_path):
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps({"seed": 5}), encoding="utf-8")
    assert load_user_config(str(bare)) == {"seed": 5}
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"fit_defaults": {"mode": "prefit"}, "metadata": {}}), encoding="utf-8")
    assert build_fit_config(load_user_config(str(nested))).mode == "prefit"
    broken = tmp_path / "broken.json"
    broken.write_text("[1, 2", encoding="utf-8")
    with pytest.raises(InputValidationError):
        load_user_config(str(broken))
    with pytest.raises(FileNotFoundError):
        load_user_config(str(tmp_path / "absent.json"))


def test_worker_count_from_environment():
    assert resolve_worker_count(3, environ={}) == 3
    assert resolve_worker_count(1, environ={"HIERFLOW_THREADS": "4"}) == 4
    assert resolve_worker_count(1, environ={"HIERFLOW_THREADS": "0"}) == (os.cpu_count() or 1)
    with pytest.raises(InputValidationError):
        resolve_worker_count(1, environ={"HIERFLOW_THREADS": "-2"})
    with pytest.raises(InputValidationError):
        resolve_worker_count(1, environ={"HIERFLOW_THREADS": "many"})



# manifests --------------------------------------------------------------------

ROOT = os.path.dirname(os.path.abspath(__file__))
TEST_ONLY_PACKAGES = {"pytest", "scipy", "networkx"}


def _pinned(name):
    with open(os.path.join(ROOT, name), encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip() and not line.startswith(("#", "-r"))]
    return {line.split("==")[0].lower() for line in lines}


def test_test_only_packages_stay_out_of_runtime_requirements():
    runtime, test_extra = _pinned("requirements.txt"), _pinned("requirements-test.txt")
    assert not runtime & TEST_ONLY_PACKAGES
    assert TEST_ONLY_PACKAGES <= test_extra
    assert {"numpy", "scikit-learn", "shapely", "click", "treeswift"} <= runtime


def test_library_does_not_import_test_only_packages():
    for folder, _, files in os.walk(src_path):
        for name in files:
            if not name.endswith(".py"):
                continue
            with open(os.path.join(folder, name), encoding="utf-8") as f:
                text = f.read()
            for package in TEST_ONLY_PACKAGES:
                assert f"import {package}" not in text, f"{name} imports {package}"
                assert f"from {package}" not in text, f"{name} imports {package}"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
