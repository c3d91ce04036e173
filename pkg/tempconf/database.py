from pathlib import Path
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker

from .models import Base
from .settings import load_settings

SessionLocal = sessionmaker(autoflush=False, autocommit=False, future=True)
engine: Optional[Engine] = None


def _build_sqlite_path(db_url: str) -> None:
	"""
	Ensure directory exists if we are using a filesystem SQLite URL like sqlite:///./data/tempconf.db
	"""
	if db_url.startswith("sqlite:///"):
		path = db_url.replace("sqlite:///", "", 1)
		if path.startswith("./"):
			path = path[2:]
		if not path or path == ":memory:":
			return
		db_path = Path(path)
		if db_path.parent:
			db_path.parent.mkdir(parents=True, exist_ok=True)


def init_db(database_url: Optional[str] = None) -> Engine:
	"""
	Bind SessionLocal to the registry database and create missing tables.
	The URL defaults to TEMPCONF_DATABASE_URL.
	"""
	global engine
	url = database_url or load_settings().database_url
	_build_sqlite_path(url)
	connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
	if engine is not None:
		engine.dispose()
	engine = create_engine(url, connect_args=connect_args, future=True)
	SessionLocal.configure(bind=engine)
	Base.metadata.create_all(bind=engine)
	return engine
