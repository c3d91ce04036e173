from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Integer, String, Text, UniqueConstraint
from sqlalchemy.orm import declarative_base

Base = declarative_base()


def _utcnow() -> datetime:
	return datetime.now(timezone.utc)


class RunRecord(Base):
	__tablename__ = "run_registry"
	__table_args__ = (
		UniqueConstraint("command", "label", "config_digest", "input_digest", name="uq_run_identity"),
	)

	id = Column(Integer, primary_key=True, autoincrement=True)
	run_id = Column(String(64), nullable=False, index=True)
	command = Column(String(32), nullable=False)
	label = Column(String(255), nullable=False)
	config_digest = Column(String(64), nullable=False)
	input_digest = Column(String(64), nullable=False)
	summary_json = Column(Text, nullable=False)
	manifest_json = Column(Text, nullable=True)
	created_at = Column(DateTime, default=_utcnow, nullable=False)
	updated_at = Column(DateTime, default=_utcnow, onupdate=_utcnow, nullable=False)

	def __repr__(self) -> str:  # pragma: no cover - helpful for debugging
		return f"<RunRecord run_id={self.run_id!r} command={self.command!r} label={self.label!r}>"
