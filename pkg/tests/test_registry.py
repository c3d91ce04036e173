import json

import numpy as np
import pytest

from conftest import make_returns
from tempconf import cache
from tempconf.backtest import BacktestRecord, SweepCell, SweepResult
from tempconf.conformal import PredictionInterval
from tempconf.data import load_prices
from tempconf.database import _build_sqlite_path, init_db
from tempconf.storage import (
	MANIFEST_NAME,
	RunManifest,
	config_digest,
	digest_file,
	make_run_id,
	run_directory,
	save_json,
	save_prices_csv,
	save_records_csv,
	save_sweep_csv,
	utc_timestamp,
	write_manifest,
)


@pytest.fixture
def registry(registry_env):
	init_db()
	return registry_env


class TestRegistry:
	def test_upsert_and_lookup(self, registry) -> None:
		cache.upsert_run("abc123", "backtest", "spx:tcp", "cfg", "inp", {"coverage": 0.95})
		assert cache.get_cached_summary("backtest", "spx:tcp", "cfg", "inp") == {"coverage": 0.95}
		assert cache.get_cached_summary("backtest", "spx:tcp", "other", "inp") is None

	def test_upsert_replaces_same_identity(self, registry) -> None:
		cache.upsert_run("r1", "sweep-cell", "spx", "cfg", "inp", {"coverage": 0.9})
		cache.upsert_run("r2", "sweep-cell", "spx", "cfg", "inp", {"coverage": 0.8}, manifest={"files": {}})
		assert cache.get_cached_summary("sweep-cell", "spx", "cfg", "inp") == {"coverage": 0.8}
		assert cache.get_run("r1") is None
		entry = cache.get_run("r2")
		assert entry["manifest"] == {"files": {}}
		assert entry["command"] == "sweep-cell"

	def test_get_run_filters_by_model(self, registry) -> None:
		cache.upsert_run("run1", "backtest", "spx:tcp", "cfg", "inp", {"final_state": {"t": 3}})
		cache.upsert_run("run1", "backtest", "spx:garch", "cfg", "inp", {})
		assert cache.get_run("run1", model="tcp")["label"] == "spx:tcp"
		assert cache.get_run("run1", model="garch")["summary"] == {}
		assert cache.get_run("run1", model="qr") is None
		assert cache.get_run("missing") is None

	def test_sqlite_directory_is_created(self, tmp_path) -> None:
		target = tmp_path / "nested" / "dir" / "reg.db"
		_build_sqlite_path(f"sqlite:///{target}")
		assert target.parent.is_dir()


class TestDigests:
	def test_config_digest_ignores_key_order(self) -> None:
		assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
		assert config_digest({"a": 1}) != config_digest({"a": 2})

	def test_run_id_is_deterministic(self) -> None:
		a = make_run_id("backtest", {"window": 252}, ["d1"])
		assert a == make_run_id("backtest", {"window": 252}, ["d1"])
		assert a != make_run_id("backtest", {"window": 252}, ["d2"])
		assert a != make_run_id("sweep", {"window": 252}, ["d1"])
		assert len(a) == 12

	def test_run_directory_name(self, tmp_path) -> None:
		path = run_directory(tmp_path, "backtest", "abc", "S&P 500")
		assert path.name == "backtest_S&P_500_abc"
		assert path.is_dir()


class TestWriters:
	def test_records_csv(self, tmp_path) -> None:
		rec = BacktestRecord(30, np.datetime64("2020-02-03"), 0.5, PredictionInterval(-1.0, 1.25, 30), True, 0.1, 0.01)
		path = save_records_csv(tmp_path / "r.csv", [rec])
		lines = open(path).read().splitlines()
		assert lines == ["t,date,r,lower,upper,covered,C,gamma", "30,2020-02-03,0.5,-1,1.25,1,0.1,0.01"]

	def test_sweep_csv_marks_errors(self, tmp_path) -> None:
		result = SweepResult(
			(
				SweepCell(w=100, gamma0=0.005, coverage=0.91234, width=2.66111, n_predictions=10),
				SweepCell(w=500, gamma0=0.005, error="too short"),
			)
		)
		lines = open(save_sweep_csv(tmp_path / "s.csv", result)).read().splitlines()
		assert lines == ["w,gamma0,coverage,width", "100,0.005,0.9123,2.6611", "500,0.005,error,error"]

	def test_prices_csv_loads_back(self, tmp_path) -> None:
		prices = make_returns([1.0, -0.5, 0.25]).to_prices(100.0)
		path = save_prices_csv(tmp_path / "p.csv", prices)
		again = load_prices(open(path, "rb").read())
		np.testing.assert_allclose(again.prices, prices.prices, rtol=1e-14)

	def test_json_rejects_nan(self, tmp_path) -> None:
		with pytest.raises(ValueError):
			save_json(tmp_path / "x.json", {"v": float("nan")})

	def test_manifest_lists_file_digests(self, tmp_path) -> None:
		data = save_json(tmp_path / "summary.json", {"coverage": 0.95})
		manifest = RunManifest(run_id="abc", command="backtest", config={"alpha": 0.05}, started_at=utc_timestamp())
		final = write_manifest(tmp_path, manifest, [data])
		stored = json.loads((tmp_path / MANIFEST_NAME).read_text())
		assert stored["files"] == {"summary.json": digest_file(tmp_path / "summary.json")}
		assert stored["artifact_version"] == final.artifact_version
		assert stored["finished_at"] is not None
