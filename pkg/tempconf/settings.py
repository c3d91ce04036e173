"""
Environment and config-file handling.

Precedence for every option: CLI flag > config file > built-in default.
"""
import logging
import os
try:
	import tomllib
except ModuleNotFoundError:  # Python < 3.11
	import tomli as tomllib
from pathlib import Path
from typing import Any, Mapping

from dotenv import load_dotenv
from pydantic import BaseModel

from .errors import PreconditionError

logger = logging.getLogger("tempconf.settings")

DEFAULT_OUTPUT_DIR = "./data/runs"
DEFAULT_DATABASE_URL = "sqlite:///./data/tempconf.db"


class Settings(BaseModel):
	output_dir: Path
	database_url: str
	log_level: str | None = None


def load_settings() -> Settings:
	load_dotenv()
	return Settings(
		output_dir=Path(os.getenv("TEMPCONF_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)),
		database_url=os.getenv("TEMPCONF_DATABASE_URL", DEFAULT_DATABASE_URL),
		log_level=os.getenv("LOG_LEVEL"),
	)


def load_config_file(path: str | Path) -> dict[str, Any]:
	"""
	Read a TOML config file into a flat dict keyed by CLI option destination.
	A `[gbt]` table is flattened to keys of the same name as the CLI flags
	(n_trees, max_depth, ...).
	"""
	path = Path(path)
	try:
		with open(path, "rb") as f:
			raw = tomllib.load(f)
	except FileNotFoundError:
		raise PreconditionError(f"config file not found: {path}")
	except tomllib.TOMLDecodeError as e:
		raise PreconditionError(f"invalid config file {path}: {e}")

	flat: dict[str, Any] = {}
	for key, value in raw.items():
		if isinstance(value, dict):
			for sub_key, sub_value in value.items():
				flat[sub_key.replace("-", "_")] = sub_value
		else:
			flat[key.replace("-", "_")] = value
	logger.debug("Loaded %d config keys from %s", len(flat), path)
	return flat


def merge_config(
	defaults: Mapping[str, Any],
	file_values: Mapping[str, Any] | None,
	cli_values: Mapping[str, Any],
) -> dict[str, Any]:
	"""
	Merge option sources; a CLI value of None means "flag not given".
	Keys unknown to `defaults` coming from the file are rejected.
	"""
	merged = dict(defaults)
	if file_values:
		unknown = sorted(set(file_values) - set(defaults))
		if unknown:
			raise PreconditionError(f"unknown config keys: {', '.join(unknown)}")
		merged.update(file_values)
	for key, value in cli_values.items():
		if value is not None and key in merged:
			merged[key] = value
	return merged
