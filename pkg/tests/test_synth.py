import numpy as np
import pytest
from pydantic import ValidationError

from conftest import STANDARD_GARCH
from tempconf.benchmarks import GarchParams
from tempconf.errors import PreconditionError
from tempconf.synth import (
	RegimeSegment,
	RegimeSpec,
	business_days,
	gen_garch,
	gen_iid_gaussian,
	gen_regime_shift,
	make_rng,
	standard_normals,
)


def _acf(x: np.ndarray, lag: int) -> float:
	x = x - x.mean()
	return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))


class TestRng:
	def test_same_seed_same_stream(self) -> None:
		a = standard_normals(make_rng(42), 10)
		b = standard_normals(make_rng(42), 10)
		np.testing.assert_array_equal(a, b)

	def test_seed_sequences_differ(self) -> None:
		a = standard_normals(make_rng([1, 0]), 10)
		b = standard_normals(make_rng([1, 1]), 10)
		assert not np.array_equal(a, b)

	def test_business_days(self) -> None:
		days = business_days(3, "2021-01-01")
		assert [str(d) for d in days] == ["2021-01-01", "2021-01-04", "2021-01-05"]

	def test_business_days_long_calendar(self) -> None:
		days = business_days(200_000, "2000-01-03")
		assert days.size == 200_000
		assert np.all(np.diff(days) > np.timedelta64(0, "D"))
		assert np.all(np.is_busday(days))

	def test_long_series_generates(self) -> None:
		r = gen_iid_gaussian(200_000, seed=4)
		assert r.values.size == 200_000
		assert r.timestamps.size == 200_000


class TestIidGaussian:
	def test_deterministic(self) -> None:
		a = gen_iid_gaussian(5, seed=9)
		b = gen_iid_gaussian(5, seed=9)
		np.testing.assert_array_equal(a.values, b.values)
		np.testing.assert_array_equal(a.timestamps, b.timestamps)

	def test_moments(self) -> None:
		r = gen_iid_gaussian(100000, mean=0.0, sd=1.0, seed=1).values
		assert abs(r.mean()) < 0.01
		assert abs(r.std() - 1.0) < 0.01

	def test_sd_scaling(self) -> None:
		one = gen_iid_gaussian(50, mean=0.3, sd=1.0, seed=2).values - 0.3
		two = gen_iid_gaussian(50, mean=0.3, sd=2.0, seed=2).values - 0.3
		np.testing.assert_allclose(two / one, 2.0, rtol=1e-9)

	@pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 5, "sd": 0.0}])
	def test_preconditions(self, kwargs) -> None:
		with pytest.raises(PreconditionError):
			gen_iid_gaussian(**kwargs)


class TestGarch:
	def test_degenerate_recursion_is_iid(self) -> None:
		p = GarchParams(omega=4.0, alpha_g=0.0, beta_g=0.0)
		np.testing.assert_allclose(gen_garch(200, p, seed=3).values, gen_iid_gaussian(200, sd=2.0, seed=3).values)

	def test_stationary_variance(self) -> None:
		r = gen_garch(100000, STANDARD_GARCH, seed=4).values
		assert r.var() == pytest.approx(STANDARD_GARCH.unconditional_variance, rel=0.10)

	def test_volatility_clustering(self) -> None:
		r = gen_garch(20000, STANDARD_GARCH, seed=5).values
		assert _acf(r**2, 1) > 0.0
		assert _acf(r**2, 1) > _acf(r, 1)

	def test_persistence_lengthens_clusters(self) -> None:
		acfs = []
		for persistence in (0.5, 0.8, 0.95):
			p = GarchParams(omega=0.05 * (1.0 - persistence), alpha_g=0.1, beta_g=persistence - 0.1)
			acfs.append(_acf(gen_garch(200000, p, seed=6).values ** 2, 10))
		assert acfs[0] < acfs[1] < acfs[2]

	def test_deterministic(self) -> None:
		np.testing.assert_array_equal(
			gen_garch(300, STANDARD_GARCH, seed=1).values, gen_garch(300, STANDARD_GARCH, seed=1).values
		)


class TestRegimeShift:
	def test_single_segment_matches_iid(self) -> None:
		spec = RegimeSpec(segments=(RegimeSegment(length=300, volatility=1.5, mean=0.1),))
		np.testing.assert_array_equal(
			gen_regime_shift(spec, seed=7).values, gen_iid_gaussian(300, mean=0.1, sd=1.5, seed=7).values
		)

	def test_second_regime_is_twice_as_volatile(self) -> None:
		r = gen_regime_shift(RegimeSpec.parse("5000:1,5000:2"), seed=8).values
		assert r[5000:].std() / r[:5000].std() == pytest.approx(2.0, rel=0.10)

	def test_empty_segments(self) -> None:
		with pytest.raises(ValidationError):
			RegimeSpec(segments=())

	def test_parse(self) -> None:
		spec = RegimeSpec.parse("2000:1, 2000:3:0.5")
		assert spec.total_length == 4000
		assert spec.segments[1] == RegimeSegment(length=2000, volatility=3.0, mean=0.5)

	@pytest.mark.parametrize("text", ["2000", "abc:1", "10:1:2:3"])
	def test_parse_rejects_bad_segments(self, text: str) -> None:
		with pytest.raises(PreconditionError):
			RegimeSpec.parse(text)

	def test_non_positive_volatility(self) -> None:
		with pytest.raises(ValidationError):
			RegimeSpec.parse("100:0")
