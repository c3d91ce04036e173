import numpy as np
import pytest
from sklearn.tree import DecisionTreeRegressor

from conftest import make_returns
from tempconf.data import build_features
from tempconf.errors import DimensionError, InsufficientDataError, PreconditionError
from tempconf.quantile_model import (
	FittedQuantileModel,
	GBTConfig,
	RegressionTree,
	_prefix_pinball_losses,
	dump_model,
	fit_quantile_gbt_arrays,
	fit_quantile_pair,
	pinball_loss,
	pinball_subgradient,
	predict_band,
	predict_quantile,
)
from tempconf.ranks import empirical_quantile, nearest_rank


def _noisy_linear(n: int = 1000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
	rng = np.random.default_rng(seed)
	X = rng.normal(size=(n, 8))
	y = X[:, 0] + 0.5 * rng.normal(size=n)
	return X, y


class TestPinball:
	def test_loss_values(self) -> None:
		assert pinball_loss(1.0, 0.0, 0.9) == pytest.approx(0.9)
		assert pinball_loss(0.0, 1.0, 0.9) == pytest.approx(0.1)
		assert pinball_loss(2.0, 2.0, 0.3) == 0.0

	def test_loss_is_vectorised(self) -> None:
		out = pinball_loss(np.array([1.0, -1.0]), 0.0, 0.25)
		assert out.tolist() == pytest.approx([0.25, 0.75])

	def test_subgradient_matches_finite_differences(self) -> None:
		rng = np.random.default_rng(7)
		h = 1e-7
		for _ in range(500):
			y, q = rng.normal(size=2) * 3
			tau = rng.uniform(0.01, 0.99)
			if abs(y - q) < 1e-3:
				continue
			fd = (pinball_loss(y, q + h, tau) - pinball_loss(y, q - h, tau)) / (2 * h)
			# the pseudo-response is the negative derivative with respect to q
			assert abs(fd + pinball_subgradient(y, q, tau)) < 1e-6

	def test_zero_residual_takes_tau_branch(self) -> None:
		assert pinball_subgradient(1.0, 1.0, 0.3) == 0.3

	def test_loss_is_convex_in_q(self) -> None:
		rng = np.random.default_rng(3)
		for _ in range(1000):
			y, q1, q2 = rng.normal(size=3) * 2
			tau = rng.uniform(0.01, 0.99)
			w = rng.uniform()
			mixed = pinball_loss(y, w * q1 + (1 - w) * q2, tau)
			assert mixed <= w * pinball_loss(y, q1, tau) + (1 - w) * pinball_loss(y, q2, tau) + 1e-12


class TestRanks:
	def test_nearest_rank(self) -> None:
		assert nearest_rank(0.95, 20) == 19
		assert nearest_rank(0.5, 4) == 2
		assert nearest_rank(0.0, 10) == 1
		assert nearest_rank(1.0, 10) == 10

	def test_empirical_quantile(self) -> None:
		assert empirical_quantile(np.arange(1.0, 101.0), 0.05) == 5.0


class TestPrefixLosses:
	def test_matches_brute_force(self) -> None:
		rng = np.random.default_rng(1)
		for tau in (0.1, 0.5, 0.9):
			values = rng.normal(size=60)
			out = _prefix_pinball_losses(values, tau)
			for k in range(values.size):
				prefix = values[: k + 1]
				expected = pinball_loss(prefix, empirical_quantile(prefix, tau), tau).sum()
				assert out[k] == pytest.approx(expected, abs=1e-9)


class TestFit:
	def test_high_quantile_covers_training_targets(self) -> None:
		X, y = _noisy_linear()
		model = fit_quantile_gbt_arrays(X, y, 0.9, GBTConfig())
		share = np.mean(y <= model.predict_many(X))
		assert share >= 0.85

	@pytest.mark.parametrize("criterion", ["gradient", "pinball"])
	def test_single_split_finds_step(self, criterion: str) -> None:
		x = np.linspace(0.0, 1.0, 200, endpoint=False)
		y = np.where(x < 0.5, 0.0, 10.0)
		cfg = GBTConfig(n_trees=1, max_depth=1, shrinkage=1.0, min_leaf=20, split_criterion=criterion)
		model = fit_quantile_gbt_arrays(x[:, None], y, 0.5, cfg)
		assert len(model.trees) == 1
		assert 0.49 < model.trees[0].threshold[0] < 0.5
		np.testing.assert_allclose(model.predict_many(np.array([[0.1], [0.9]])), [0.0, 10.0])

	def test_step_with_default_shrinkage(self) -> None:
		x = np.linspace(-1.0, 1.0, 200, endpoint=False)
		y = np.where(x < 0.0, 0.0, 1.0)
		model = fit_quantile_gbt_arrays(x[:, None], y, 0.5, GBTConfig(n_trees=50, max_depth=1))
		pred = model.predict_many(np.array([[-0.5], [0.5]]))
		assert abs(pred[0]) < 0.05
		assert abs(pred[1] - 1.0) < 0.05

	def test_base_value_rises_with_level(self) -> None:
		X, y = _noisy_linear(500)
		bases = [fit_quantile_gbt_arrays(X, y, tau, GBTConfig(n_trees=0)).base_value for tau in (0.025, 0.1, 0.5, 0.9, 0.975)]
		assert bases == sorted(bases)
		assert bases[0] < bases[-1]

	def test_gradient_trees_follow_sklearn_routing(self) -> None:
		X, y = _noisy_linear(400)
		model = fit_quantile_gbt_arrays(X, y, 0.8, GBTConfig(n_trees=3))
		assert model.trees and all(tree.float32 for tree in model.trees)

		grad = pinball_subgradient(y, np.median(y), 0.8)
		estimator = DecisionTreeRegressor(max_depth=3, min_samples_leaf=20, random_state=0).fit(X, grad)
		tree = RegressionTree.from_sklearn(estimator, np.zeros(estimator.tree_.node_count))
		np.testing.assert_array_equal(tree.apply(X), estimator.apply(X.astype(np.float32)))

	def test_zero_trees_predicts_base_quantile(self) -> None:
		X, y = _noisy_linear(200)
		model = fit_quantile_gbt_arrays(X, y, 0.5, GBTConfig(n_trees=0))
		assert model.trees == ()
		assert np.all(model.predict_many(X) == empirical_quantile(y, 0.5))

	def test_constant_targets_stop_early(self) -> None:
		X = np.random.default_rng(0).normal(size=(100, 3))
		model = fit_quantile_gbt_arrays(X, np.zeros(100), 0.9, GBTConfig())
		assert model.trees == ()
		assert np.all(model.predict_many(X) == 0.0)

	def test_deterministic(self) -> None:
		X, y = _noisy_linear(300)
		cfg = GBTConfig(n_trees=20, subsample=0.7, seed=5)
		a = fit_quantile_gbt_arrays(X, y, 0.1, cfg).predict_many(X)
		b = fit_quantile_gbt_arrays(X, y, 0.1, cfg).predict_many(X)
		np.testing.assert_array_equal(a, b)

	def test_leaves_respect_min_leaf(self) -> None:
		X, y = _noisy_linear(300)
		cfg = GBTConfig(n_trees=5, min_leaf=40)
		model = fit_quantile_gbt_arrays(X, y, 0.5, cfg)
		for tree in model.trees:
			counts = np.bincount(tree.apply(X), minlength=tree.feature.size)
			leaves = counts[tree.feature < 0]
			assert leaves[leaves > 0].min() >= 40

	def test_too_few_rows(self) -> None:
		X, y = _noisy_linear(30)
		with pytest.raises(InsufficientDataError):
			fit_quantile_gbt_arrays(X, y, 0.5, GBTConfig(min_leaf=20))

	def test_bad_quantile_level(self) -> None:
		X, y = _noisy_linear(100)
		with pytest.raises(PreconditionError):
			fit_quantile_gbt_arrays(X, y, 1.0, GBTConfig())

	def test_config_validation(self) -> None:
		with pytest.raises(ValueError):
			GBTConfig(shrinkage=0.0)
		with pytest.raises(ValueError):
			GBTConfig(split_criterion="variance")


class TestQuantilePair:
	def _features(self):
		return build_features(make_returns(np.random.default_rng(2).normal(size=400)))

	def test_levels(self) -> None:
		lower, upper = fit_quantile_pair(self._features(), 0.05, GBTConfig(n_trees=10, min_leaf=10))
		assert lower.tau == pytest.approx(0.025)
		assert upper.tau == pytest.approx(0.975)

	@pytest.mark.parametrize("alpha", [0.0, 1.0])
	def test_alpha_outside_unit_interval(self, alpha: float) -> None:
		with pytest.raises(PreconditionError):
			fit_quantile_pair(self._features(), alpha, GBTConfig(n_trees=2))

	def test_upper_above_lower(self) -> None:
		X = self._features()
		lower, upper = fit_quantile_pair(X, 0.05, GBTConfig(n_trees=10, min_leaf=10))
		assert np.mean(upper.predict_many(X.features) >= lower.predict_many(X.features)) >= 0.95


class TestPredict:
	def test_arity_mismatch(self) -> None:
		X, y = _noisy_linear(100)
		model = fit_quantile_gbt_arrays(X, y, 0.5, GBTConfig(n_trees=3))
		with pytest.raises(DimensionError):
			predict_quantile(model, np.zeros(3))
		with pytest.raises(DimensionError):
			model.predict_many(np.zeros((2, 3)))

	def test_single_row_matches_batch(self) -> None:
		X, y = _noisy_linear(200)
		model = fit_quantile_gbt_arrays(X, y, 0.7, GBTConfig(n_trees=10))
		assert predict_quantile(model, X[5]) == model.predict_many(X)[5]

	def test_band_swaps_crossed_pairs(self) -> None:
		lower = FittedQuantileModel(tau=0.025, base_value=1.0, shrinkage=0.1, trees=(), n_features=2)
		upper = FittedQuantileModel(tau=0.975, base_value=-1.0, shrinkage=0.1, trees=(), n_features=2)
		lo, hi, crossed = predict_band((lower, upper), np.zeros((3, 2)))
		assert lo.tolist() == [-1.0] * 3
		assert hi.tolist() == [1.0] * 3
		assert crossed.all()

	def test_dump_model(self) -> None:
		X, y = _noisy_linear(200)
		model = fit_quantile_gbt_arrays(X, y, 0.5, GBTConfig(n_trees=2))
		dumped = dump_model(model)
		assert dumped["tau"] == 0.5
		assert len(dumped["trees"]) == len(model.trees)
		assert set(dumped["trees"][0]) == {"feature", "threshold", "left", "right", "value"}
