"""Order-statistic helpers shared by the quantile learner, conformal scoring and Hist."""
import math

import numpy as np

from .errors import EmptyInputError

# Slack for levels such as 0.95 * 20 that land a hair above an integer in binary.
_RANK_EPS = 1e-9


def nearest_rank(p: float, n: int) -> int:
	"""1-based rank ceil(p * n), clipped to [1, n]."""
	if n < 1:
		raise EmptyInputError("rank requested on an empty sample")
	k = math.ceil(p * n - _RANK_EPS)
	return min(n, max(1, k))


def nearest_ranks(p: float, sizes: np.ndarray) -> np.ndarray:
	"""Vectorised nearest_rank over an array of sample sizes."""
	sizes = np.asarray(sizes, dtype=np.intp)
	k = np.ceil(p * sizes - _RANK_EPS).astype(np.intp)
	return np.minimum(sizes, np.maximum(1, k))


def order_statistic(values: np.ndarray, k: int) -> float:
	"""k-th smallest value (1-based)."""
	values = np.asarray(values, dtype=float)
	if values.size == 0:
		raise EmptyInputError("order statistic of an empty sample")
	return float(np.partition(values, k - 1)[k - 1])


def empirical_quantile(values: np.ndarray, p: float) -> float:
	"""Nearest-rank-above empirical p-quantile."""
	values = np.asarray(values, dtype=float)
	return order_statistic(values, nearest_rank(p, values.size))
