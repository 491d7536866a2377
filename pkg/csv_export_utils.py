"""
CSV and JSON writers for simulation results
Every file carries the manifest hash of the run that produced it
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
HASH_PREFIX = "# manifest_sha256="


class ResultExporter:
    """Schema-checked, full-precision export of result tables"""

    def __init__(self):
        # Column schemas of the tabular outputs
        self.schemas: Dict[str, List[str]] = {
            "spectrum": ["detuning_hz", "value"],
            "intensity_sweep": ["series", "intensity_uw_mm2", "width_hz", "amplitude", "amplitude_rel",
                                "delta_width_hz"],
            "trap_sweep": ["series", "intensity_uw_mm2", "trap_population"],
            "ratio_table": ["series", "targets", "amplitude", "ratio"],
            "lineshape": ["detuning_hz", "numeric", "analytic_re_rho_ge", "analytic_f2"],
            "fit_r": ["r", "misfit"],
            "decomposition": ["label", "rabi_product_f3", "rabi_product_f4", "rabi_product_rel",
                              "population_sum"],
        }

    def validate_frame(self, frame: pd.DataFrame, kind: str) -> bool:
        """Check that the frame has every column of its schema and numeric data in them"""
        if kind not in self.schemas:
            logger.error(f"Unknown result kind: {kind}")
            return False
        if frame.empty:
            logger.error(f"{kind} table is empty")
            return False

        missing = [column for column in self.schemas[kind] if column not in frame.columns]
        if missing:
            logger.error(f"{kind} table missing columns: {missing}")
            return False

        for column in self.schemas[kind]:
            if column in ("series", "targets", "label"):
                continue
            if not pd.api.types.is_numeric_dtype(frame[column]):
                logger.error(f"{kind}: column {column} must be numeric")
                return False
        return True

    def format_frame(self, frame: pd.DataFrame, kind: str) -> pd.DataFrame:
        """Schema columns first, in schema order; extra columns follow"""
        schema = self.schemas[kind]
        extra = [column for column in frame.columns if column not in schema]
        return frame[schema + extra]

    def export_csv(self, frame: pd.DataFrame, path: Path, kind: str, manifest_hash: str,
                   validate: bool = True) -> Path:
        """
        Write a result table as CSV

        Args:
            frame: table to write
            path: destination file
            kind: schema name (see `schemas`)
            manifest_hash: hash of the producing run, written as the first line
            validate: check the schema first

        Returns:
            The path written
        """
        try:
            if validate and not self.validate_frame(frame, kind):
                raise ValueError(f"{kind} table validation failed")
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as handle:
                handle.write(f"{HASH_PREFIX}{manifest_hash}\n")
                self.format_frame(frame, kind).to_csv(handle, index=False, float_format=FLOAT_FORMAT)
            logger.info(f"Wrote {kind} table ({len(frame)} rows): {path}")
            return path
        except Exception as e:
            logger.error(f"Error exporting CSV: {str(e)}")
            raise

    def export_json(self, document: Dict[str, Any], path: Path, manifest_hash: Optional[str] = None) -> Path:
        try:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            if manifest_hash is not None:
                document = {"manifest_sha256": manifest_hash, **document}
            with open(path, "w", encoding="utf-8") as handle:
                json.dump(document, handle, indent=2, default=_json_default, allow_nan=True)
                handle.write("\n")
            logger.info(f"Wrote {path}")
            return path
        except Exception as e:
            logger.error(f"Error exporting JSON: {str(e)}")
            raise

    def read_manifest_hash(self, path: Path) -> Optional[str]:
        with open(path, "r", encoding="utf-8") as handle:
            first = handle.readline().strip()
        return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None

    def read_reference_spectrum(self, path: str) -> pd.DataFrame:
        """Read a (detuning_hz, value) spectrum, e.g. one written by `spectrum`"""
        try:
            if not Path(path).is_file():
                raise FileNotFoundError(f"Reference spectrum not found: {path}")
            frame = pd.read_csv(path, comment="#")
            if not self.validate_frame(frame, "spectrum"):
                raise ValueError(f"Reference spectrum {path} is not a (detuning_hz, value) table")
            frame = frame.sort_values("detuning_hz", kind="stable").reset_index(drop=True)
            logger.info(f"Read reference spectrum with {len(frame)} points: {path}")
            return frame
        except Exception as e:
            logger.error(f"Error reading reference spectrum: {str(e)}")
            raise


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# Global instance for easy access
result_exporter = ResultExporter()
