import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
	sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from tempconf.benchmarks import GarchParams
from tempconf.data import ReturnSeries
from tempconf.quantile_model import GBTConfig
from tempconf.storage import save_prices_csv
from tempconf.synth import business_days, gen_garch

STANDARD_GARCH = GarchParams(omega=0.05, alpha_g=0.1, beta_g=0.85)


def make_returns(values, start: str = "2020-01-01") -> ReturnSeries:
	values = np.asarray(values, dtype=float)
	return ReturnSeries(business_days(values.size, start), values)


@pytest.fixture
def registry_env(tmp_path, monkeypatch):
	"""Per-test registry database and output directory."""
	monkeypatch.setenv("TEMPCONF_DATABASE_URL", f"sqlite:///{tmp_path / 'registry.db'}")
	monkeypatch.setenv("TEMPCONF_OUTPUT_DIR", str(tmp_path / "runs"))
	return tmp_path


@pytest.fixture
def fast_gbt() -> GBTConfig:
	return GBTConfig(n_trees=10, min_leaf=10)


@pytest.fixture
def garch_series() -> ReturnSeries:
	return gen_garch(400, STANDARD_GARCH, seed=11)


@pytest.fixture
def price_csv(tmp_path, garch_series) -> Path:
	path = tmp_path / "asset.csv"
	save_prices_csv(path, garch_series.to_prices(100.0))
	return path
