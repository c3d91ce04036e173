"""
Conformal scoring, thresholds, interval formation and the online threshold update.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError, EmptyInputError, PreconditionError
from .ranks import nearest_rank, order_statistic

logger = logging.getLogger("tempconf.conformal")


class ModelId(str, Enum):
	TCP = "tcp"
	QR = "qr"
	GARCH = "garch"
	HIST = "hist"


class ThresholdMethod(str, Enum):
	EMPIRICAL = "empirical"
	FINITE_SAMPLE = "finite_sample"


class ConformalState(BaseModel):
	"""
	Online threshold C plus the learning-rate schedule gamma0 / (1 + lambda*t)^beta.
	Serialises as {C, t, alpha, gamma0, lambda, beta, kappa}.
	"""

	model_config = ConfigDict(frozen=True, populate_by_name=True)

	C: float = 0.0
	t: int = Field(0, ge=0)
	alpha: float = Field(0.05, gt=0.0, lt=1.0)
	gamma0: float = Field(0.01, gt=0.0)
	lam: float = Field(0.01, gt=0.0, alias="lambda")
	beta: float = Field(0.75, gt=0.5, le=1.0)
	kappa: float = Field(0.0, ge=0.0)

	def to_json(self) -> str:
		return self.model_dump_json(by_alias=True)

	@classmethod
	def from_json(cls, text: str | bytes) -> "ConformalState":
		return cls.model_validate_json(text)


@dataclass(frozen=True, slots=True)
class PredictionInterval:
	lower: float
	upper: float
	time_index: int = 0
	model_id: Optional[ModelId] = None
	degenerate: bool = False

	def __post_init__(self) -> None:
		if not self.lower <= self.upper:
			raise PreconditionError(f"interval bounds inverted: [{self.lower}, {self.upper}]")

	@property
	def width(self) -> float:
		return self.upper - self.lower

	def contains(self, r: float) -> bool:
		return self.lower <= r <= self.upper


@dataclass(frozen=True)
class ScoreSet:
	scores: np.ndarray = field(default_factory=lambda: np.empty(0))

	def __post_init__(self) -> None:
		scores = np.asarray(self.scores, dtype=float).ravel()
		if not np.all(np.isfinite(scores)):
			raise PreconditionError("non-conformity scores must be finite")
		object.__setattr__(self, "scores", scores)

	def __len__(self) -> int:
		return int(self.scores.size)


def nonconformity_scores(returns, q_lo, q_hi) -> ScoreSet:
	"""Pooled r_i - q_lo_i and q_hi_i - r_i; both are positive while r_i sits inside the band."""
	r = np.asarray(returns, dtype=float).ravel()
	lo = np.asarray(q_lo, dtype=float).ravel()
	hi = np.asarray(q_hi, dtype=float).ravel()
	if not (r.size == lo.size == hi.size):
		raise DimensionError(f"length mismatch: returns={r.size} q_lo={lo.size} q_hi={hi.size}")
	if r.size == 0:
		raise EmptyInputError("no observations to score")
	return ScoreSet(np.concatenate((r - lo, hi - r)))


def conformal_threshold(s: ScoreSet, alpha: float, method: ThresholdMethod = ThresholdMethod.EMPIRICAL) -> float:
	"""
	empirical: order statistic ceil((1-alpha) n).
	finite_sample: order statistic min(n, ceil((1-alpha)(n+1))).
	"""
	n = len(s)
	if n == 0:
		raise EmptyInputError("threshold requested on an empty score set")
	if ThresholdMethod(method) is ThresholdMethod.FINITE_SAMPLE:
		k = min(n, nearest_rank(1.0 - alpha, n + 1))
	else:
		k = nearest_rank(1.0 - alpha, n)
	return order_statistic(s.scores, k)


def window_threshold(s: ScoreSet, alpha: float, method: ThresholdMethod = ThresholdMethod.EMPIRICAL) -> float:
	"""
	Widening of the quantile band that leaves at most alpha/2 of the pooled margins
	violated. A step can only break one of its two margins, so at most alpha * n
	window steps fall outside.
	"""
	return conformal_threshold(ScoreSet(-s.scores), alpha / 2.0, method)


def form_interval(
	q_lo: float,
	q_hi: float,
	C: float,
	time_index: int = 0,
	model_id: Optional[ModelId] = ModelId.TCP,
) -> PredictionInterval:
	"""[q_lo - C, q_hi + C]; an inverted result collapses to its midpoint."""
	lower = q_lo - C
	upper = q_hi + C
	if lower > upper:
		mid = (lower + upper) / 2.0
		return PredictionInterval(mid, mid, time_index, model_id, degenerate=True)
	return PredictionInterval(lower, upper, time_index, model_id)


def is_covered(r: float, iv: PredictionInterval) -> bool:
	# bounds count as covered
	return iv.lower <= r <= iv.upper


def coverage_error(r: float, iv: PredictionInterval, alpha: float) -> float:
	return (1.0 - alpha) if not is_covered(r, iv) else -alpha


def learning_rate(state: ConformalState) -> float:
	return state.gamma0 / (1.0 + state.lam * state.t) ** state.beta


def adaptive_update(state: ConformalState, r: float, iv: PredictionInterval) -> ConformalState:
	"""
	C' = C + gamma_t * e_t. With kappa > 0 a covered step additionally shrinks
	C' by kappa * gamma_t * |C'|.
	"""
	gamma = learning_rate(state)
	covered = is_covered(r, iv)
	C = state.C + gamma * ((1.0 - state.alpha) if not covered else -state.alpha)
	if covered and state.kappa > 0.0:
		C -= state.kappa * gamma * abs(C)
	return state.model_copy(update={"C": C, "t": state.t + 1})


def conformal_p_value(cal_scores: ScoreSet, test_score: float) -> float:
	"""(1 + #{calibration scores >= test score}) / (n + 1)."""
	n = len(cal_scores)
	if n == 0:
		raise EmptyInputError("p-value needs at least one calibration score")
	return (1.0 + np.count_nonzero(cal_scores.scores >= test_score)) / (n + 1.0)


def conformal_p_values(cal_scores: ScoreSet, test_scores) -> np.ndarray:
	"""conformal_p_value for many test scores against one calibration set."""
	n = len(cal_scores)
	if n == 0:
		raise EmptyInputError("p-value needs at least one calibration score")
	ordered = np.sort(cal_scores.scores)
	at_least = n - np.searchsorted(ordered, np.asarray(test_scores, dtype=float), side="left")
	return (1.0 + at_least) / (n + 1.0)


def split_conformal_interval(cal_residuals: ScoreSet, point_pred: float, alpha: float) -> PredictionInterval:
	"""point_pred +/- the finite-sample threshold of absolute calibration residuals."""
	if len(cal_residuals) and np.any(cal_residuals.scores < 0):
		raise PreconditionError("split-conformal residuals must be non-negative")
	q = conformal_threshold(cal_residuals, alpha, ThresholdMethod.FINITE_SAMPLE)
	return PredictionInterval(point_pred - q, point_pred + q)
