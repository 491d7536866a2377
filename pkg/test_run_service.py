"""
Test script for run bookkeeping and the manifest hash
"""
import json

import pytest

from run_service import CODE_VERSION, MANIFEST_NAME, RunService, manifest_hash

CONFIG = {"cell": {"r": 0.6}, "field": {"b_ut": 22.7}, "output": {"dir": "results"}, "workers": 4}


def read_manifest(out_dir):
    return json.loads((out_dir / MANIFEST_NAME).read_text())


def test_hash_is_deterministic_and_input_sensitive():
    digest = manifest_hash(CONFIG, 0, "spectrum")
    assert digest == manifest_hash(dict(CONFIG), 0, "spectrum")
    assert len(digest) == 64
    assert manifest_hash(CONFIG, 1, "spectrum") != digest
    assert manifest_hash(CONFIG, 0, "sweep") != digest
    assert manifest_hash({**CONFIG, "cell": {"r": 0.3}}, 0, "spectrum") != digest
    assert manifest_hash(CONFIG, 0, "spectrum", version="0.0.1") != digest


def test_hash_ignores_output_location_and_workers():
    moved = {**CONFIG, "output": {"dir": "/tmp/elsewhere"}, "workers": 1}
    assert manifest_hash(moved, 0, "spectrum") == manifest_hash(CONFIG, 0, "spectrum")


def test_successful_run_is_complete(tmp_path):
    with RunService.track("spectrum", CONFIG, 0, str(tmp_path)) as run:
        assert read_manifest(tmp_path)["status"] == "Running"
        path = run.path("spectrum.csv")
        path.write_text("x\n")
        run.record(path)

    manifest = read_manifest(tmp_path)
    assert manifest["status"] == "Complete"
    assert manifest["files"] == ["spectrum.csv"]
    assert manifest["version"] == CODE_VERSION
    assert manifest["manifest_sha256"] == manifest_hash(CONFIG, 0, "spectrum")
    assert manifest["config"] == CONFIG
    assert manifest["completed_at"] is not None


def test_failed_run_is_recorded_and_reraised(tmp_path):
    with pytest.raises(RuntimeError, match="diverged"):
        with RunService.track("sweep", CONFIG, 0, str(tmp_path)):
            raise RuntimeError("diverged")

    status = RunService.get_run_status(str(tmp_path))
    assert status["status"] == "Failed"
    assert "RuntimeError: diverged" in status["error"]
    assert "completed_at" in status


def test_run_ids_are_unique_but_hashes_match(tmp_path):
    first = RunService.start_run("spectrum", CONFIG, 0, str(tmp_path / "a"))
    second = RunService.start_run("spectrum", CONFIG, 0, str(tmp_path / "b"))
    assert first.run_id != second.run_id
    assert first.manifest_hash == second.manifest_hash


def test_status_of_missing_run(tmp_path):
    assert RunService.get_run_status(str(tmp_path)) == {"error": "Run not found"}
