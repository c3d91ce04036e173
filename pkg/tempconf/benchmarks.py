"""
Comparison models: GARCH(1,1) with Gaussian intervals, rolling historical
simulation and static quantile regression.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit, ndtri

from .conformal import ModelId, PredictionInterval
from .data import FeatureMatrix, FeatureRow, ReturnSeries
from .errors import InsufficientDataError, NumericError, OptimizationFailure, PreconditionError, WarmUpError
from .quantile_model import FittedQuantileModel, GBTConfig, fit_quantile_pair, predict_quantile
from .ranks import empirical_quantile

logger = logging.getLogger("tempconf.benchmarks")

GARCH_MIN_LOGLIK_POINTS = 10
GARCH_MIN_FIT_POINTS = 100
DEFAULT_HIST_WINDOW = 252

# persistence is kept strictly below 1 so the fitted model stays stationary
_MAX_PERSISTENCE = 1.0 - 1e-6
_START_PERSISTENCE = (0.8, 0.9, 0.95, 0.98)
_START_SPLIT = (0.05, 0.15)
_BAD_OBJECTIVE = 1e10


def _values(r: ReturnSeries | Iterable[float]) -> np.ndarray:
	return np.asarray(r.values if isinstance(r, ReturnSeries) else r, dtype=float)


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------


class GarchParams(BaseModel):
	model_config = ConfigDict(frozen=True, populate_by_name=True)

	omega: float = Field(gt=0.0)
	alpha_g: float = Field(ge=0.0, alias="alpha")
	beta_g: float = Field(ge=0.0, alias="beta")

	@model_validator(mode="after")
	def _check_stationary(self) -> "GarchParams":
		if self.alpha_g + self.beta_g >= 1.0:
			raise ValueError(f"alpha + beta must be < 1, got {self.alpha_g + self.beta_g}")
		return self

	@property
	def persistence(self) -> float:
		return self.alpha_g + self.beta_g

	@property
	def unconditional_variance(self) -> float:
		return self.omega / (1.0 - self.persistence)


@dataclass(frozen=True)
class GarchFit:
	params: GarchParams
	loglik: float
	mean: float = 0.0
	n_obs: int = 0
	at_lower_bound: bool = False

	def to_dict(self) -> dict[str, Any]:
		return {
			"omega": self.params.omega,
			"alpha": self.params.alpha_g,
			"beta": self.params.beta_g,
			"loglik": self.loglik,
			"mean": self.mean,
			"n_obs": self.n_obs,
			"at_lower_bound": self.at_lower_bound,
		}


def garch_recursion(p: GarchParams, r_prev: float, var_prev: float) -> float:
	return p.omega + p.alpha_g * r_prev * r_prev + p.beta_g * var_prev


def garch_variance_path(p: GarchParams, r, var0: float) -> np.ndarray:
	"""
	Conditional variances for every observation plus the one-step forecast:
	out[0] = var0 and out[t] = garch_recursion(p, r[t-1], out[t-1]), length len(r) + 1.
	"""
	x = p.omega + p.alpha_g * np.square(_values(r))
	if x.size == 0:
		return np.array([var0], dtype=float)
	tail, _ = lfilter([1.0], [1.0, -p.beta_g], x, zi=[p.beta_g * var0])
	return np.concatenate(([var0], tail))


def garch_loglik(p: GarchParams, r: ReturnSeries | Iterable[float], var0: Optional[float] = None) -> float:
	"""Gaussian quasi-log-likelihood; the first variance defaults to the sample variance of r."""
	values = _values(r)
	n = values.size
	if n < GARCH_MIN_LOGLIK_POINTS:
		raise InsufficientDataError(f"log-likelihood needs at least {GARCH_MIN_LOGLIK_POINTS} returns, got {n}")
	if var0 is None:
		var0 = float(np.var(values))
	var = garch_variance_path(p, values[:-1], var0)
	with np.errstate(all="ignore"):
		terms = -0.5 * math.log(2.0 * math.pi) - 0.5 * np.log(var) - 0.5 * values * values / var
	bad = ~np.isfinite(terms)
	if bad.any():
		t = int(np.argmax(bad))
		raise NumericError(f"non-finite log-likelihood term, variance={var[t]!r}", t=t)
	return float(terms.sum())


def _unpack(theta: np.ndarray) -> GarchParams:
	omega = math.exp(theta[0])
	s = min(float(expit(theta[1])), _MAX_PERSISTENCE)
	a = float(expit(theta[2]))
	return GarchParams(omega=omega, alpha_g=s * a, beta_g=s * (1.0 - a))


def fit_garch(r: ReturnSeries | Iterable[float], demean: bool = False) -> GarchFit:
	"""
	Maximum quasi-likelihood fit by Nelder-Mead from eight starting points.

	Parameters are searched as (log omega, logit persistence, logit alpha share),
	so every candidate satisfies omega > 0 and alpha + beta < 1.
	"""
	values = _values(r)
	n = values.size
	if n < GARCH_MIN_FIT_POINTS:
		raise InsufficientDataError(f"GARCH fit needs at least {GARCH_MIN_FIT_POINTS} returns, got {n}")
	mean = float(values.mean()) if demean else 0.0
	x = values - mean
	var0 = float(np.var(x))
	if not np.isfinite(var0) or var0 <= 0.0:
		raise OptimizationFailure("returns have zero variance; GARCH is not identified", best=None)

	def objective(theta: np.ndarray) -> float:
		if not np.all(np.isfinite(theta)):
			return _BAD_OBJECTIVE
		try:
			return -garch_loglik(_unpack(theta), x, var0) / n
		except (NumericError, ValueError, OverflowError):
			return _BAD_OBJECTIVE

	best_theta: Optional[np.ndarray] = None
	best_value = np.inf
	best_start = np.inf
	improved = False
	for s in _START_PERSISTENCE:
		for a in _START_SPLIT:
			theta0 = np.array([math.log(var0 * (1.0 - s)), logit(s), logit(a)])
			f0 = objective(theta0)
			best_start = min(best_start, f0)
			res = minimize(
				objective,
				theta0,
				method="Nelder-Mead",
				options={"maxiter": 4000, "xatol": 1e-7, "fatol": 1e-10},
			)
			logger.debug("GARCH restart s=%.2f a=%.2f: start=%.6f end=%.6f iters=%d", s, a, f0, res.fun, res.nit)
			if res.fun < f0:
				improved = True
			if res.fun < best_value:
				best_value, best_theta = float(res.fun), np.asarray(res.x)

	if best_theta is None or not improved or best_value >= _BAD_OBJECTIVE:
		raise OptimizationFailure(
			"no restart improved on its starting point",
			best=None if best_theta is None else _unpack(best_theta),
		)

	params = _unpack(best_theta)
	fit = GarchFit(
		params=params,
		loglik=-best_value * n,
		mean=mean,
		n_obs=n,
		at_lower_bound=params.omega < 1e-8 * var0,
	)
	logger.info(
		"GARCH fit: omega=%.6f alpha=%.4f beta=%.4f loglik=%.4f n=%d",
		params.omega,
		params.alpha_g,
		params.beta_g,
		fit.loglik,
		n,
	)
	return fit


def normal_quantile(p: float) -> float:
	if not 0.0 < p < 1.0:
		raise PreconditionError(f"probability must lie in (0, 1), got {p}")
	return float(ndtri(p))


def garch_interval(var_t: float, alpha: float, mean: float = 0.0, time_index: int = 0) -> PredictionInterval:
	if var_t < 0:
		raise PreconditionError(f"variance must be non-negative, got {var_t}")
	half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(var_t)
	return PredictionInterval(mean - half, mean + half, time_index, ModelId.GARCH)


# ---------------------------------------------------------------------------
# Historical simulation
# ---------------------------------------------------------------------------


class HistWindow:
	"""Rolling buffer of the last `window` returns."""

	def __init__(self, window: int = DEFAULT_HIST_WINDOW, values: Iterable[float] = ()) -> None:
		if window < 1:
			raise PreconditionError("historical-simulation window must be positive")
		self.window = window
		self.buffer: deque[float] = deque(values, maxlen=window)

	def __len__(self) -> int:
		return len(self.buffer)

	@property
	def is_full(self) -> bool:
		return len(self.buffer) == self.window

	def push(self, r: float) -> None:
		self.buffer.append(float(r))

	def values(self) -> np.ndarray:
		return np.fromiter(self.buffer, dtype=float, count=len(self.buffer))

	def mean(self) -> float:
		if not self.buffer:
			raise WarmUpError("empty historical window")
		return float(self.values().mean())


def hist_sim_interval(h: HistWindow, alpha: float, time_index: int = 0) -> PredictionInterval:
	if not h.is_full:
		raise WarmUpError(f"historical window holds {len(h)} of {h.window} returns")
	values = h.values()
	lower = empirical_quantile(values, alpha / 2.0)
	upper = empirical_quantile(values, 1.0 - alpha / 2.0)
	return PredictionInterval(lower, upper, time_index, ModelId.HIST)


# ---------------------------------------------------------------------------
# Static quantile regression
# ---------------------------------------------------------------------------

QrMode = Literal["paper", "causal"]


def static_qr_training_rows(n_rows: int, mode: QrMode, train_fraction: float = 0.3) -> int:
	"""
	Rows used to train the static pair. `paper` uses every row, including
	rows it later predicts. `causal` uses the leading fraction only.
	"""
	if mode == "paper":
		return n_rows
	if mode == "causal":
		return int(train_fraction * n_rows)
	raise PreconditionError(f"unknown QR mode {mode!r}")


def fit_static_qr(
	X: FeatureMatrix, alpha: float, cfg: GBTConfig, mode: QrMode = "paper", train_fraction: float = 0.3
) -> tuple[tuple[FittedQuantileModel, FittedQuantileModel], int]:
	n_train = static_qr_training_rows(len(X), mode, train_fraction)
	if mode == "paper":
		logger.warning("Static QR in paper mode is trained on the rows it predicts")
	pair = fit_quantile_pair(X.window(0, n_train), alpha, cfg)
	return pair, n_train


def static_qr_predict(
	pair: tuple[FittedQuantileModel, FittedQuantileModel],
	row: FeatureRow | np.ndarray,
	time_index: int = 0,
) -> PredictionInterval:
	lower = predict_quantile(pair[0], row)
	upper = predict_quantile(pair[1], row)
	if lower > upper:
		lower, upper = upper, lower
	return PredictionInterval(lower, upper, time_index, ModelId.QR)
