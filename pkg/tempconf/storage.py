"""
Output files: run directories, JSON and CSV writers, content digests and the run manifest.
"""
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import pandas as pd
from pydantic import BaseModel, Field

from . import __version__
from .backtest import BacktestRecord, SweepResult
from .data import PriceSeries, write_prices_csv

logger = logging.getLogger("tempconf.storage")

MANIFEST_NAME = "manifest.json"
RECORD_COLUMNS = ("t", "date", "r", "lower", "upper", "covered", "C", "gamma")
SWEEP_COLUMNS = ("w", "gamma0", "coverage", "width")
ERROR_MARKER = "error"


def _safe(name: str) -> str:
	return name.replace("/", "_").replace("\\", "_").replace(" ", "_")


def digest_bytes(data: bytes) -> str:
	return hashlib.sha256(data).hexdigest()


def digest_file(path: Path) -> str:
	return digest_bytes(Path(path).read_bytes())


def config_digest(config: Mapping[str, Any]) -> str:
	"""Digest of the canonical JSON form of a configuration."""
	return digest_bytes(json.dumps(config, sort_keys=True, default=str).encode("utf-8"))


def make_run_id(command: str, config: Mapping[str, Any], input_digests: Iterable[str]) -> str:
	"""Deterministic id: the same command, config and inputs map to the same id."""
	h = hashlib.sha256(command.encode("utf-8"))
	h.update(config_digest(config).encode("ascii"))
	for d in input_digests:
		h.update(d.encode("ascii"))
	return h.hexdigest()[:12]


def run_directory(base: Path, command: str, run_id: str, label: Optional[str] = None) -> Path:
	name = f"{command}_{_safe(label)}_{run_id}" if label else f"{command}_{run_id}"
	path = Path(base) / name
	path.mkdir(parents=True, exist_ok=True)
	return path


class RunManifest(BaseModel):
	run_id: str
	command: str
	artifact_version: str = __version__
	master_seed: int = 0
	config: dict[str, Any]
	input_digests: dict[str, str] = Field(default_factory=dict)
	started_at: str
	finished_at: Optional[str] = None
	files: dict[str, str] = Field(default_factory=dict)


def utc_timestamp() -> str:
	return datetime.now(timezone.utc).isoformat(timespec="seconds")


def save_json(path: Path, payload: Any) -> str:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", encoding="utf-8") as f:
		json.dump(payload, f, indent=2, ensure_ascii=False, allow_nan=False, default=str)
		f.write("\n")
	logger.info("Wrote %s", path)
	return str(path)


def save_records_csv(path: Path, records: Iterable[BacktestRecord]) -> str:
	frame = pd.DataFrame([rec.as_row() for rec in records], columns=list(RECORD_COLUMNS))
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
	logger.info("Wrote %d records to %s", len(frame), path)
	return str(path)


def save_sweep_csv(path: Path, result: SweepResult) -> str:
	"""Rows in grid order; failed cells carry the error marker in place of their metrics."""
	rows = []
	for cell in result.cells:
		if cell.ok:
			rows.append({"w": cell.w, "gamma0": cell.gamma0, "coverage": f"{cell.coverage:.4f}", "width": f"{cell.width:.4f}"})
		else:
			rows.append({"w": cell.w, "gamma0": cell.gamma0, "coverage": ERROR_MARKER, "width": ERROR_MARKER})
	frame = pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	frame.to_csv(path, index=False, lineterminator="\n")
	logger.info("Wrote %d sweep cells to %s", len(frame), path)
	return str(path)


def save_prices_csv(path: Path, prices: PriceSeries) -> str:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", encoding="utf-8", newline="") as f:
		f.write(write_prices_csv(prices))
	logger.info("Wrote %d prices to %s", len(prices), path)
	return str(path)


def write_manifest(directory: Path, manifest: RunManifest, files: Iterable[str | Path]) -> RunManifest:
	"""Record the digest of every output file and write manifest.json next to them."""
	digests = {Path(p).name: digest_file(Path(p)) for p in files}
	final = manifest.model_copy(update={"files": digests, "finished_at": utc_timestamp()})
	save_json(Path(directory) / MANIFEST_NAME, final.model_dump())
	return final
