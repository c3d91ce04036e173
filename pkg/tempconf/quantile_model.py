"""
Gradient-boosted regression trees trained on the pinball (check) loss.

Each boosting stage fits a tree to the pinball pseudo-response (tau where the
residual is >= 0, tau - 1 otherwise) and sets every leaf to the empirical
tau-quantile of the residuals that reach it. Predictions are
base_value + shrinkage * (sum of leaf values along each tree's path).

The `gradient` criterion grows each stage with sklearn's least-squares
DecisionTreeRegressor on the pseudo-responses. The `pinball` criterion grows
trees here, choosing splits by the exact pinball-loss reduction.
"""
import logging
from dataclasses import dataclass
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.tree import DecisionTreeRegressor

from .data import FeatureMatrix, FeatureRow
from .errors import DimensionError, InsufficientDataError, PreconditionError
from .ranks import empirical_quantile, nearest_ranks

logger = logging.getLogger("tempconf.quantile_model")

_MIN_GAIN = 1e-12
_PREFIX_BLOCK = 256


class GBTConfig(BaseModel):
	model_config = ConfigDict(frozen=True)

	n_trees: int = Field(100, ge=0)
	max_depth: int = Field(3, ge=1)
	shrinkage: float = Field(0.1, gt=0.0, le=1.0)
	min_leaf: int = Field(20, ge=1)
	subsample: float = Field(1.0, gt=0.0, le=1.0)
	seed: int = 0
	split_criterion: Literal["gradient", "pinball"] = "gradient"


def check_quantile_level(tau: float) -> float:
	tau = float(tau)
	if not 0.0 < tau < 1.0:
		raise PreconditionError(f"quantile level must lie in (0, 1), got {tau}")
	return tau


def pinball_loss(y, q, tau: float):
	"""tau * (y - q) if y >= q else (1 - tau) * (q - y)."""
	diff = np.asarray(y, dtype=float) - np.asarray(q, dtype=float)
	loss = np.where(diff >= 0, tau * diff, (tau - 1.0) * diff)
	return float(loss) if loss.ndim == 0 else loss


def pinball_subgradient(y, q, tau: float):
	"""
	Negative subgradient of the pinball loss with respect to q, the pseudo-response
	each boosting stage is fitted to. A zero residual takes the `tau` branch.
	"""
	diff = np.asarray(y, dtype=float) - np.asarray(q, dtype=float)
	g = np.where(diff >= 0, tau, tau - 1.0)
	return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class RegressionTree:
	"""
	Array-encoded binary tree; feature == -1 marks a leaf. x <= threshold goes left.
	Trees taken from sklearn compare float32 features, as sklearn does.
	"""

	feature: np.ndarray
	threshold: np.ndarray
	left: np.ndarray
	right: np.ndarray
	value: np.ndarray
	depth: int
	float32: bool = False

	@classmethod
	def from_sklearn(cls, estimator: DecisionTreeRegressor, value: np.ndarray) -> "RegressionTree":
		t = estimator.tree_
		return cls(
			feature=np.where(t.feature < 0, -1, t.feature).astype(np.intp),
			threshold=np.asarray(t.threshold, dtype=float),
			left=np.asarray(t.children_left, dtype=np.intp),
			right=np.asarray(t.children_right, dtype=np.intp),
			value=value,
			depth=int(t.max_depth),
			float32=True,
		)

	def apply(self, X: np.ndarray) -> np.ndarray:
		if self.float32:
			X = np.asarray(X, dtype=np.float32).astype(float)
		node = np.zeros(X.shape[0], dtype=np.intp)
		for _ in range(self.depth):
			f = self.feature[node]
			internal = np.nonzero(f >= 0)[0]
			if internal.size == 0:
				break
			at = node[internal]
			go_left = X[internal, f[internal]] <= self.threshold[at]
			node[internal] = np.where(go_left, self.left[at], self.right[at])
		return node

	def to_dict(self) -> dict[str, Any]:
		return {
			"feature": self.feature.tolist(),
			"threshold": self.threshold.tolist(),
			"left": self.left.tolist(),
			"right": self.right.tolist(),
			"value": self.value.tolist(),
		}


@dataclass(frozen=True)
class FittedQuantileModel:
	tau: float
	base_value: float
	shrinkage: float
	trees: tuple[RegressionTree, ...]
	n_features: int

	def predict_many(self, X: np.ndarray) -> np.ndarray:
		X = np.asarray(X, dtype=float)
		if X.ndim != 2 or X.shape[1] != self.n_features:
			raise DimensionError(f"model expects {self.n_features} features, got shape {X.shape}")
		out = np.full(X.shape[0], self.base_value)
		for tree in self.trees:
			out += self.shrinkage * tree.value[tree.apply(X)]
		return out


def dump_model(m: FittedQuantileModel) -> dict[str, Any]:
	"""Debug dump of a fitted model; not a stable interchange format."""
	return {
		"tau": m.tau,
		"base_value": m.base_value,
		"shrinkage": m.shrinkage,
		"n_features": m.n_features,
		"trees": [t.to_dict() for t in m.trees],
	}


def predict_quantile(m: FittedQuantileModel, row: FeatureRow | Sequence[float] | np.ndarray) -> float:
	x = row.to_array() if isinstance(row, FeatureRow) else np.asarray(row, dtype=float)
	if x.ndim != 1 or x.size != m.n_features:
		raise DimensionError(f"model expects {m.n_features} features, got {x.size}")
	return float(m.predict_many(x[None, :])[0])


# ---------------------------------------------------------------------------
# Split search
# ---------------------------------------------------------------------------


def _prefix_pinball_losses(values: np.ndarray, tau: float) -> np.ndarray:
	"""
	out[k] = min over c of sum(pinball(values[:k+1] - c)), the minimiser being the
	nearest-rank tau-quantile of the prefix. Blocked over prefixes to bound memory.
	"""
	m = values.size
	order = np.argsort(values, kind="stable")
	sorted_v = values[order]
	ranks = np.empty(m, dtype=np.intp)
	ranks[order] = np.arange(m)
	sizes = np.arange(1, m + 1)
	need = nearest_ranks(tau, sizes)
	totals = np.cumsum(values)

	out = np.empty(m)
	members = np.zeros(m)
	for lo in range(0, m, _PREFIX_BLOCK):
		hi = min(m, lo + _PREFIX_BLOCK)
		rows = np.arange(hi - lo)
		onehot = np.zeros((hi - lo, m))
		onehot[rows, ranks[lo:hi]] = 1.0
		indicator = np.cumsum(onehot, axis=0) + members
		members = indicator[-1].copy()
		counts = np.cumsum(indicator, axis=1)
		sums = np.cumsum(indicator * sorted_v, axis=1)
		j_star = np.count_nonzero(counts < need[lo:hi, None], axis=1)
		q = sorted_v[j_star]
		n_le = counts[rows, j_star]
		s_le = sums[rows, j_star]
		out[lo:hi] = tau * ((totals[lo:hi] - s_le) - q * (sizes[lo:hi] - n_le)) + (1.0 - tau) * (q * n_le - s_le)
	return out


def _pinball_gains(resid_sorted: np.ndarray, tau: float) -> np.ndarray:
	"""Loss reduction for every cut position of one feature's ordering."""
	m = resid_sorted.shape[1]
	gains = np.empty((resid_sorted.shape[0], m - 1))
	for f in range(resid_sorted.shape[0]):
		left = _prefix_pinball_losses(resid_sorted[f], tau)
		right = _prefix_pinball_losses(resid_sorted[f, ::-1], tau)
		gains[f] = left[-1] - (left[:-1] + right[m - 2 :: -1])
	return gains


def _best_split(
	X: np.ndarray,
	resid: np.ndarray,
	order: np.ndarray,
	rows: np.ndarray,
	tau: float,
	min_leaf: int,
) -> tuple[int, float] | None:
	n, p = X.shape
	m = rows.size
	mask = np.zeros(n, dtype=bool)
	mask[rows] = True
	node_order = order.T[mask[order].T].reshape(p, m)
	xs = X[node_order, np.arange(p)[:, None]]
	gains = _pinball_gains(resid[node_order], tau)

	n_left = np.arange(1, m)
	valid = (xs[:, 1:] > xs[:, :-1]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
	gains = np.where(valid, gains, -np.inf)
	flat = int(np.argmax(gains))
	f, k = divmod(flat, m - 1)
	if not np.isfinite(gains[f, k]) or gains[f, k] <= _MIN_GAIN:
		return None
	a, b = xs[f, k], xs[f, k + 1]
	threshold = a + (b - a) / 2.0
	if threshold >= b:
		threshold = a
	return f, float(threshold)


def _grow_pinball_tree(X: np.ndarray, resid: np.ndarray, tau: float, cfg: GBTConfig) -> RegressionTree:
	order = np.argsort(X, axis=0, kind="stable")
	feature: list[int] = []
	threshold: list[float] = []
	left: list[int] = []
	right: list[int] = []
	value: list[float] = []

	def grow(rows: np.ndarray, depth: int) -> int:
		node = len(feature)
		feature.append(-1)
		threshold.append(0.0)
		left.append(-1)
		right.append(-1)
		value.append(0.0)

		split = None
		if depth < cfg.max_depth and rows.size >= 2 * cfg.min_leaf:
			split = _best_split(X, resid, order, rows, tau, cfg.min_leaf)
		if split is None:
			value[node] = empirical_quantile(resid[rows], tau)
			return node

		f, thr = split
		goes_left = X[rows, f] <= thr
		feature[node] = f
		threshold[node] = thr
		left[node] = grow(rows[goes_left], depth + 1)
		right[node] = grow(rows[~goes_left], depth + 1)
		return node

	grow(np.arange(X.shape[0]), 0)
	return RegressionTree(
		feature=np.array(feature, dtype=np.intp),
		threshold=np.array(threshold, dtype=float),
		left=np.array(left, dtype=np.intp),
		right=np.array(right, dtype=np.intp),
		value=np.array(value, dtype=float),
		depth=cfg.max_depth,
	)


def _grow_gradient_tree(X: np.ndarray, resid: np.ndarray, grad: np.ndarray, tau: float, cfg: GBTConfig) -> RegressionTree:
	"""Least-squares tree on the pseudo-responses, leaves reset to in-leaf residual quantiles."""
	estimator = DecisionTreeRegressor(max_depth=cfg.max_depth, min_samples_leaf=cfg.min_leaf, random_state=cfg.seed)
	estimator.fit(X, grad)
	leaves = estimator.apply(X.astype(np.float32))
	value = np.zeros(estimator.tree_.node_count)
	for leaf in np.unique(leaves):
		value[leaf] = empirical_quantile(resid[leaves == leaf], tau)
	return RegressionTree.from_sklearn(estimator, value)


def _grow_tree(X: np.ndarray, resid: np.ndarray, tau: float, cfg: GBTConfig) -> RegressionTree:
	grad = pinball_subgradient(resid, 0.0, tau)
	# identical pseudo-responses carry no least-squares signal; fall back to the exact loss
	if cfg.split_criterion == "pinball" or grad.min() == grad.max():
		return _grow_pinball_tree(X, resid, tau, cfg)
	return _grow_gradient_tree(X, resid, grad, tau, cfg)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def fit_quantile_gbt_arrays(features: np.ndarray, targets: np.ndarray, tau: float, cfg: GBTConfig) -> FittedQuantileModel:
	tau = check_quantile_level(tau)
	X = np.asarray(features, dtype=float)
	y = np.asarray(targets, dtype=float)
	if X.ndim != 2 or X.shape[0] != y.size:
		raise DimensionError(f"features of shape {X.shape} do not match {y.size} targets")
	n = y.size
	if n < 2 * cfg.min_leaf or n == 0:
		raise InsufficientDataError(f"need at least {2 * cfg.min_leaf} training rows, got {n}")

	base = empirical_quantile(y, tau)
	pred = np.full(n, base)
	rng = np.random.Generator(np.random.Philox(cfg.seed)) if cfg.subsample < 1.0 else None
	n_sample = max(2 * cfg.min_leaf, int(round(cfg.subsample * n)))

	trees: list[RegressionTree] = []
	for _ in range(cfg.n_trees):
		resid = y - pred
		if rng is not None and n_sample < n:
			idx = np.sort(rng.choice(n, size=n_sample, replace=False))
			tree = _grow_tree(X[idx], resid[idx], tau, cfg)
		else:
			tree = _grow_tree(X, resid, tau, cfg)

		if not np.any(tree.value):
			if rng is None:
				# residuals are unchanged, so every later stage would repeat this tree
				break
			continue
		pred = pred + cfg.shrinkage * tree.value[tree.apply(X)]
		trees.append(tree)

	logger.debug("Fitted quantile GBT: tau=%.4f rows=%d trees=%d base=%.6f", tau, n, len(trees), base)
	return FittedQuantileModel(
		tau=tau,
		base_value=float(base),
		shrinkage=cfg.shrinkage,
		trees=tuple(trees),
		n_features=X.shape[1],
	)


def fit_quantile_gbt(X: FeatureMatrix, tau: float, cfg: GBTConfig) -> FittedQuantileModel:
	return fit_quantile_gbt_arrays(X.features, X.targets, tau, cfg)


def fit_quantile_pair(X: FeatureMatrix, alpha: float, cfg: GBTConfig) -> tuple[FittedQuantileModel, FittedQuantileModel]:
	"""Models at alpha/2 and 1 - alpha/2 on the same rows and seed."""
	if not 0.0 < alpha < 1.0:
		raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
	lower = fit_quantile_gbt(X, alpha / 2.0, cfg)
	upper = fit_quantile_gbt(X, 1.0 - alpha / 2.0, cfg)
	return lower, upper


def predict_band(
	pair: tuple[FittedQuantileModel, FittedQuantileModel], X: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
	"""Lower/upper predictions for each row of X, swapped where they cross."""
	lo = pair[0].predict_many(X)
	hi = pair[1].predict_many(X)
	crossed = lo > hi
	if crossed.any():
		lo, hi = np.where(crossed, hi, lo), np.where(crossed, lo, hi)
	return lo, hi, crossed
