"""
Run bookkeeping: run ids, output directories and the run manifest
"""
import hashlib
import json
import logging
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from csv_export_utils import result_exporter

logger = logging.getLogger(__name__)

CODE_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"

# where and how fast a run executes does not change its numbers
EXECUTION_KEYS = ("output", "workers")


def manifest_hash(config: Dict[str, Any], seed: int, command: str, version: str = CODE_VERSION) -> str:
    """sha256 over the resolved inputs only; timestamps and run id are excluded"""
    inputs = {key: value for key, value in config.items() if key not in EXECUTION_KEYS}
    payload = json.dumps({"command": command, "config": inputs, "seed": seed, "version": version},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class Run:
    run_id: str
    command: str
    out_dir: Path
    manifest_hash: str
    manifest: Dict[str, Any]
    files: List[str] = field(default_factory=list)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def record(self, path: Path) -> Path:
        self.files.append(Path(path).name)
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunService:
    """Creates runs and moves their manifest through Running -> Complete / Failed"""

    @staticmethod
    def start_run(command: str, config: Dict[str, Any], seed: int, out_dir: str) -> Run:
        run_id = str(uuid.uuid4())
        digest = manifest_hash(config, seed, command)
        manifest = {
            "run_id": run_id,
            "command": command,
            "status": "Running",
            "created_at": _now(),
            "completed_at": None,
            "version": CODE_VERSION,
            "seed": seed,
            "manifest_sha256": digest,
            "config": config,
            "files": [],
        }
        run = Run(run_id, command, Path(out_dir), digest, manifest)
        RunService._write(run)
        logger.info(f"Run {run_id} ({command}) started in {out_dir}")
        return run

    @staticmethod
    def complete_run(run: Run) -> None:
        run.manifest.update(status="Complete", completed_at=_now(), files=sorted(set(run.files)))
        RunService._write(run)
        logger.info(f"Run {run.run_id} complete: {len(run.files)} file(s)")

    @staticmethod
    def fail_run(run: Run, error: BaseException) -> None:
        run.manifest.update(status="Failed", completed_at=_now(), files=sorted(set(run.files)),
                            error=f"{type(error).__name__}: {error}")
        RunService._write(run)
        logger.error(f"Run {run.run_id} failed: {str(error)}")

    @staticmethod
    @contextmanager
    def track(command: str, config: Dict[str, Any], seed: int, out_dir: str) -> Iterator[Run]:
        run = RunService.start_run(command, config, seed, out_dir)
        try:
            yield run
        except BaseException as e:
            RunService.fail_run(run, e)
            raise
        RunService.complete_run(run)

    @staticmethod
    def get_run_status(out_dir: str) -> Dict[str, Any]:
        """Status of the run whose manifest sits in `out_dir`"""
        path = Path(out_dir) / MANIFEST_NAME
        if not path.is_file():
            return {"error": "Run not found"}
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        status = {"status": manifest["status"], "run_id": manifest["run_id"],
                  "created_at": manifest["created_at"]}
        if manifest["status"] != "Running":
            status["completed_at"] = manifest["completed_at"]
        if manifest["status"] == "Failed":
            status["error"] = manifest.get("error")
        return status

    @staticmethod
    def _write(run: Run) -> Optional[Path]:
        return result_exporter.export_json(run.manifest, run.path(MANIFEST_NAME))
