import json
from typing import Any, Optional

from sqlalchemy import select

from .database import SessionLocal
from .models import RunRecord


def _identity(command: str, label: str, config_digest: str, input_digest: str):
	return select(RunRecord).where(
		RunRecord.command == command,
		RunRecord.label == label,
		RunRecord.config_digest == config_digest,
		RunRecord.input_digest == input_digest,
	)


def get_cached_summary(command: str, label: str, config_digest: str, input_digest: str) -> Optional[dict[str, Any]]:
	with SessionLocal() as session:
		result = session.execute(_identity(command, label, config_digest, input_digest)).scalar_one_or_none()
		if not result:
			return None
		return json.loads(result.summary_json)


def upsert_run(
	run_id: str,
	command: str,
	label: str,
	config_digest: str,
	input_digest: str,
	summary: dict[str, Any],
	manifest: Optional[dict[str, Any]] = None,
) -> None:
	summary_json = json.dumps(summary, sort_keys=True)
	manifest_json = json.dumps(manifest, sort_keys=True) if manifest is not None else None
	with SessionLocal() as session:
		entry = session.execute(_identity(command, label, config_digest, input_digest)).scalar_one_or_none()
		if entry:
			entry.run_id = run_id
			entry.summary_json = summary_json
			entry.manifest_json = manifest_json
		else:
			entry = RunRecord(
				run_id=run_id,
				command=command,
				label=label,
				config_digest=config_digest,
				input_digest=input_digest,
				summary_json=summary_json,
				manifest_json=manifest_json,
			)
			session.add(entry)
		session.commit()


def get_run(run_id: str, model: Optional[str] = None) -> Optional[dict[str, Any]]:
	"""
	Summary and manifest of the most recently updated entry with this run id.
	`model` narrows a backtest run to the entry labelled `<asset>:<model>`.
	"""
	with SessionLocal() as session:
		statement = select(RunRecord).where(RunRecord.run_id == run_id)
		if model is not None:
			statement = statement.where(RunRecord.label.endswith(f":{model}"))
		result = session.execute(statement.order_by(RunRecord.updated_at.desc())).scalars().first()
		if not result:
			return None
		return {
			"run_id": result.run_id,
			"command": result.command,
			"label": result.label,
			"summary": json.loads(result.summary_json),
			"manifest": json.loads(result.manifest_json) if result.manifest_json else None,
		}
