"""
Walk-forward backtests.

run_tcp drives the temporal conformal loop: at every step it (re)fits the
quantile pair on the trailing window, scores that window, composes the window
threshold with the online threshold, issues the interval for the next return
and only then observes it and updates the online state. run_benchmark runs
the comparison models over the same series. sensitivity_sweep repeats run_tcp
over a (window, gamma0) grid.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .benchmarks import (
	DEFAULT_HIST_WINDOW,
	HistWindow,
	QrMode,
	fit_garch,
	fit_static_qr,
	garch_interval,
	garch_variance_path,
	hist_sim_interval,
	static_qr_training_rows,
)
from .conformal import (
	ConformalState,
	ModelId,
	PredictionInterval,
	ThresholdMethod,
	adaptive_update,
	form_interval,
	is_covered,
	learning_rate,
	nonconformity_scores,
	window_threshold,
)
from .data import FEATURE_START, ReturnSeries, build_features
from .errors import EmptyInputError, InsufficientDataError, ModelError, ModelFailure, PreconditionError, TempconfError
from .quantile_model import FittedQuantileModel, GBTConfig, fit_quantile_pair, predict_band

logger = logging.getLogger("tempconf.backtest")

ThresholdMode = Literal["additive", "online_only", "window_only"]

DEFAULT_SWEEP_WINDOWS = (100, 252, 500)
DEFAULT_SWEEP_GAMMA0 = (0.005, 0.01, 0.05)
ROLLING_WINDOW = 250


class BacktestConfig(BaseModel):
	model_config = ConfigDict(frozen=True, populate_by_name=True)

	model_id: ModelId = ModelId.TCP
	alpha: float = Field(0.05, gt=0.0, lt=1.0)
	window: int = Field(252, ge=2)
	gamma0: float = Field(0.01, gt=0.0)
	lam: float = Field(0.01, gt=0.0, alias="lambda")
	beta: float = Field(0.75, gt=0.5, le=1.0)
	kappa: float = Field(0.0, ge=0.0)
	refit_every: int = Field(1, ge=1)
	gbt: GBTConfig = Field(default_factory=GBTConfig)
	qr_mode: QrMode = "paper"
	qr_train_fraction: float = Field(0.3, gt=0.0, lt=1.0)
	threshold_mode: ThresholdMode = "additive"
	threshold_method: ThresholdMethod = ThresholdMethod.EMPIRICAL
	hist_window: int = Field(DEFAULT_HIST_WINDOW, ge=1)
	# 0 keeps the warm-up parameters for the whole run
	garch_refit_every: int = Field(0, ge=0)
	garch_demean: bool = False

	@model_validator(mode="after")
	def _window_holds_two_leaves(self) -> "BacktestConfig":
		if self.model_id is ModelId.TCP and self.window < 2 * self.gbt.min_leaf:
			raise ValueError(f"window {self.window} is smaller than two leaves of {self.gbt.min_leaf} rows")
		return self

	def initial_state(self) -> ConformalState:
		return ConformalState(
			C=0.0,
			t=0,
			alpha=self.alpha,
			gamma0=self.gamma0,
			lam=self.lam,
			beta=self.beta,
			kappa=self.kappa,
		)

	def with_updates(self, **changes: Any) -> "BacktestConfig":
		"""Validated copy; model_copy(update=...) would skip validation."""
		data = self.model_dump()
		data.update(changes)
		return BacktestConfig.model_validate(data)


@dataclass(frozen=True, slots=True)
class BacktestRecord:
	time_index: int
	date: np.datetime64
	r: float
	interval: PredictionInterval
	covered: bool
	C_at_issue: Optional[float] = None
	gamma_at_issue: Optional[float] = None
	crossed: bool = False

	@property
	def lower(self) -> float:
		return self.interval.lower

	@property
	def upper(self) -> float:
		return self.interval.upper

	@property
	def width(self) -> float:
		return self.interval.upper - self.interval.lower

	def as_row(self) -> dict[str, Any]:
		return {
			"t": self.time_index,
			"date": str(np.datetime64(self.date, "D")),
			"r": self.r,
			"lower": self.interval.lower,
			"upper": self.interval.upper,
			"covered": int(self.covered),
			"C": self.C_at_issue,
			"gamma": self.gamma_at_issue,
		}


def empirical_coverage(records: Sequence[BacktestRecord]) -> float:
	if not records:
		raise EmptyInputError("coverage of an empty record set")
	return float(np.mean([rec.covered for rec in records]))


def avg_interval_width(records: Sequence[BacktestRecord]) -> float:
	if not records:
		raise EmptyInputError("width of an empty record set")
	return float(np.mean([rec.interval.upper - rec.interval.lower for rec in records]))


def rolling_coverage(records: Sequence[BacktestRecord], window: int = ROLLING_WINDOW) -> np.ndarray:
	"""out[k] is the coverage of records k .. k+window-1."""
	if window < 1:
		raise PreconditionError("rolling window must be positive")
	covered = np.array([rec.covered for rec in records], dtype=float)
	if covered.size < window:
		return np.empty(0)
	cs = np.concatenate(([0.0], np.cumsum(covered)))
	return (cs[window:] - cs[:-window]) / window


@dataclass(frozen=True)
class BacktestReport:
	model_id: ModelId
	records: tuple[BacktestRecord, ...]
	empirical_coverage: float
	avg_width: float
	n_predictions: int
	degenerate_count: int
	crossing_count: int
	final_state: Optional[ConformalState] = None
	model_info: dict[str, Any] = field(default_factory=dict)
	models: Optional[tuple[FittedQuantileModel, FittedQuantileModel]] = field(default=None, compare=False, repr=False)

	@classmethod
	def from_records(
		cls,
		model_id: ModelId,
		records: Iterable[BacktestRecord],
		final_state: Optional[ConformalState] = None,
		model_info: Optional[dict[str, Any]] = None,
		models: Optional[tuple[FittedQuantileModel, FittedQuantileModel]] = None,
	) -> "BacktestReport":
		records = tuple(records)
		return cls(
			model_id=model_id,
			records=records,
			empirical_coverage=empirical_coverage(records),
			avg_width=avg_interval_width(records),
			n_predictions=len(records),
			degenerate_count=sum(rec.interval.degenerate for rec in records),
			crossing_count=sum(rec.crossed for rec in records),
			final_state=final_state,
			model_info=dict(model_info or {}),
			models=models,
		)

	def summary(self) -> dict[str, Any]:
		out: dict[str, Any] = {
			"model": self.model_id.value,
			"n_predictions": self.n_predictions,
			"empirical_coverage": self.empirical_coverage,
			"avg_width": self.avg_width,
			"degenerate_count": self.degenerate_count,
			"crossing_count": self.crossing_count,
			"first_index": self.records[0].time_index,
			"first_date": str(np.datetime64(self.records[0].date, "D")),
			"last_date": str(np.datetime64(self.records[-1].date, "D")),
		}
		rolling = rolling_coverage(self.records, ROLLING_WINDOW)
		if rolling.size:
			out["rolling_coverage_250"] = {"min": float(rolling.min()), "max": float(rolling.max())}
		if self.final_state is not None:
			out["final_state"] = self.final_state.model_dump(by_alias=True)
		if self.model_info:
			out["model_info"] = self.model_info
		return out


# ---------------------------------------------------------------------------
# TCP
# ---------------------------------------------------------------------------


def compose_threshold(mode: ThresholdMode, C_window: float, C_adapt: float) -> float:
	if mode == "additive":
		return C_window + C_adapt
	if mode == "online_only":
		return C_adapt
	if mode == "window_only":
		return C_window
	raise PreconditionError(f"unknown threshold mode {mode!r}")


def run_tcp(
	series: ReturnSeries,
	cfg: BacktestConfig,
	initial_state: Optional[ConformalState] = None,
) -> BacktestReport:
	w = cfg.window
	n = len(series)
	if n <= w + FEATURE_START + 1:
		raise InsufficientDataError(f"TCP with window {w} needs more than {w + FEATURE_START + 1} returns, got {n}")

	X = build_features(series)
	features, targets = X.features, X.targets
	state = initial_state if initial_state is not None else cfg.initial_state()
	pair: Optional[tuple[FittedQuantileModel, FittedQuantileModel]] = None
	records: list[BacktestRecord] = []
	logger.info(
		"TCP backtest: n=%d window=%d alpha=%.4f gamma0=%.4f refit_every=%d mode=%s",
		n,
		w,
		cfg.alpha,
		cfg.gamma0,
		cfg.refit_every,
		cfg.threshold_mode,
	)

	for i in range(w, len(X)):
		t = X.time_index(i)
		try:
			if pair is None or (i - w) % cfg.refit_every == 0:
				pair = fit_quantile_pair(X.window(i - w, i), cfg.alpha, cfg.gbt)
			lo_w, hi_w, _ = predict_band(pair, features[i - w : i])
			lo, hi, crossed = predict_band(pair, features[i : i + 1])
		except ModelError as e:
			raise ModelFailure(str(e), step=t) from e

		C_window = window_threshold(nonconformity_scores(targets[i - w : i], lo_w, hi_w), cfg.alpha, cfg.threshold_method)
		C = compose_threshold(cfg.threshold_mode, C_window, state.C)
		iv = form_interval(float(lo[0]), float(hi[0]), C, t, ModelId.TCP)
		if bool(crossed[0]):
			logger.debug("Quantile crossing repaired at t=%d", t)

		r = float(targets[i])
		records.append(
			BacktestRecord(
				time_index=t,
				date=X.timestamps[i],
				r=r,
				interval=iv,
				covered=is_covered(r, iv),
				C_at_issue=C,
				gamma_at_issue=learning_rate(state),
				crossed=bool(crossed[0]),
			)
		)
		state = adaptive_update(state, r, iv)

	report = BacktestReport.from_records(ModelId.TCP, records, final_state=state, models=pair)
	logger.info(
		"TCP done: predictions=%d coverage=%.4f width=%.4f degenerate=%d crossings=%d",
		report.n_predictions,
		report.empirical_coverage,
		report.avg_width,
		report.degenerate_count,
		report.crossing_count,
	)
	return report


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def _record(series: ReturnSeries, t: int, iv: PredictionInterval, crossed: bool = False) -> BacktestRecord:
	r = float(series.values[t])
	return BacktestRecord(t, series.timestamps[t], r, iv, is_covered(r, iv), crossed=crossed)


def _run_qr(series: ReturnSeries, cfg: BacktestConfig) -> BacktestReport:
	X = build_features(series)
	try:
		pair, n_train = fit_static_qr(X, cfg.alpha, cfg.gbt, cfg.qr_mode, cfg.qr_train_fraction)
	except ModelError as e:
		raise ModelFailure(str(e), step=X.time_index(0)) from e
	start = 0 if cfg.qr_mode == "paper" else n_train
	if start >= len(X):
		raise InsufficientDataError("no rows left to predict after the static QR training span")

	lo, hi, crossed = predict_band(pair, X.features[start:])
	records = []
	for k in range(lo.size):
		t = X.time_index(start + k)
		iv = PredictionInterval(float(lo[k]), float(hi[k]), t, ModelId.QR)
		records.append(_record(series, t, iv, bool(crossed[k])))
	if crossed.any():
		logger.warning("Static QR: %d crossed quantile pairs repaired by swap", int(crossed.sum()))
	info = {"qr_mode": cfg.qr_mode, "training_rows": n_train}
	return BacktestReport.from_records(ModelId.QR, records, model_info=info, models=pair)


def _run_garch(series: ReturnSeries, cfg: BacktestConfig) -> BacktestReport:
	values = series.values
	n = len(series)
	w = cfg.window
	if n <= w:
		raise InsufficientDataError(f"GARCH with a {w}-return warm-up needs more than {w} returns, got {n}")

	refits = [w]
	if cfg.garch_refit_every:
		refits = list(range(w, n, cfg.garch_refit_every))

	records: list[BacktestRecord] = []
	fit = None
	for k, start in enumerate(refits):
		stop = refits[k + 1] if k + 1 < len(refits) else n
		try:
			# expanding history up to, not including, the first return this fit predicts
			fit = fit_garch(values[:start], demean=cfg.garch_demean)
		except ModelError as e:
			raise ModelFailure(str(e), step=start) from e
		x = values[:stop] - fit.mean
		path = garch_variance_path(fit.params, x, float(np.var(x[:start])))
		for t in range(start, stop):
			records.append(_record(series, t, garch_interval(float(path[t]), cfg.alpha, fit.mean, t)))

	info = {"garch": fit.to_dict(), "refits": len(refits)}
	return BacktestReport.from_records(ModelId.GARCH, records, model_info=info)


def _run_hist(series: ReturnSeries, cfg: BacktestConfig) -> BacktestReport:
	values = series.values
	hw = cfg.hist_window
	if len(series) <= hw:
		raise InsufficientDataError(f"historical simulation with window {hw} needs more than {hw} returns")
	h = HistWindow(hw, values[:hw])
	records: list[BacktestRecord] = []
	for t in range(hw, len(series)):
		records.append(_record(series, t, hist_sim_interval(h, cfg.alpha, t)))
		h.push(values[t])
	return BacktestReport.from_records(ModelId.HIST, records, model_info={"hist_window": hw})


_BENCHMARKS = {
	ModelId.QR: _run_qr,
	ModelId.GARCH: _run_garch,
	ModelId.HIST: _run_hist,
}


def run_benchmark(series: ReturnSeries, cfg: BacktestConfig) -> BacktestReport:
	runner = _BENCHMARKS.get(cfg.model_id)
	if runner is None:
		raise PreconditionError(f"{cfg.model_id.value} is not a benchmark model")
	report = runner(series, cfg)
	logger.info(
		"%s done: predictions=%d coverage=%.4f width=%.4f",
		cfg.model_id.value,
		report.n_predictions,
		report.empirical_coverage,
		report.avg_width,
	)
	return report


def run_model(series: ReturnSeries, cfg: BacktestConfig, initial_state: Optional[ConformalState] = None) -> BacktestReport:
	if cfg.model_id is ModelId.TCP:
		return run_tcp(series, cfg, initial_state=initial_state)
	return run_benchmark(series, cfg)


# ---------------------------------------------------------------------------
# Windows and warm-up accounting
# ---------------------------------------------------------------------------


class WindowSummary(BaseModel):
	start: Optional[str] = None
	end: Optional[str] = None
	n_predictions: int
	empirical_coverage: float
	avg_width: float


def window_summary(report: BacktestReport, start: Optional[str] = None, end: Optional[str] = None) -> WindowSummary:
	"""Coverage and width over records dated within [start, end]; either bound may be open."""
	lo = np.datetime64(start, "D") if start else None
	hi = np.datetime64(end, "D") if end else None
	if lo is not None and hi is not None and lo > hi:
		raise PreconditionError(f"window start {start} is after end {end}")
	selected = [
		rec
		for rec in report.records
		if (lo is None or rec.date >= lo) and (hi is None or rec.date <= hi)
	]
	if not selected:
		raise EmptyInputError(f"no predictions between {start or '-inf'} and {end or '+inf'}")
	return WindowSummary(
		start=start,
		end=end,
		n_predictions=len(selected),
		empirical_coverage=empirical_coverage(selected),
		avg_width=avg_interval_width(selected),
	)


class WarmupEntry(BaseModel):
	model: ModelId
	first_index: int
	n_predictions: int


def warmup_table(series_length: int, cfg: BacktestConfig) -> list[WarmupEntry]:
	"""First predicted return index and prediction count for each model on a series of this length."""
	feature_rows = max(0, series_length - FEATURE_START)
	qr_start = 0 if cfg.qr_mode == "paper" else static_qr_training_rows(feature_rows, cfg.qr_mode, cfg.qr_train_fraction)
	firsts = {
		ModelId.TCP: FEATURE_START + cfg.window,
		ModelId.QR: FEATURE_START + qr_start,
		ModelId.GARCH: cfg.window,
		ModelId.HIST: cfg.hist_window,
	}
	return [
		WarmupEntry(model=model, first_index=first, n_predictions=max(0, series_length - first))
		for model, first in firsts.items()
	]


# ---------------------------------------------------------------------------
# Sensitivity sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
	w: int
	gamma0: float
	coverage: Optional[float] = None
	width: Optional[float] = None
	n_predictions: int = 0
	seed: int = 0
	error: Optional[str] = None

	@property
	def ok(self) -> bool:
		return self.error is None


@dataclass(frozen=True)
class SweepResult:
	cells: tuple[SweepCell, ...]

	def __len__(self) -> int:
		return len(self.cells)

	def cell(self, w: int, gamma0: float) -> SweepCell:
		for c in self.cells:
			if c.w == w and c.gamma0 == gamma0:
				return c
		raise KeyError((w, gamma0))

	@property
	def n_succeeded(self) -> int:
		return sum(c.ok for c in self.cells)


def sweep_seed(master_seed: int, index: int) -> int:
	return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _run_cell(task: tuple[ReturnSeries, BacktestConfig, int, float, int]) -> SweepCell:
	series, cfg, w, gamma0, seed = task
	try:
		cell_cfg = cfg.with_updates(window=w, gamma0=gamma0, gbt={**cfg.gbt.model_dump(), "seed": seed})
		report = run_tcp(series, cell_cfg)
	# ValidationError and PreconditionError are ValueErrors; FloatingPointError is an ArithmeticError
	except (TempconfError, ValueError, ArithmeticError) as e:
		logger.warning("Sweep cell w=%d gamma0=%.4f failed: %s", w, gamma0, e)
		return SweepCell(w=w, gamma0=gamma0, seed=seed, error=str(e))
	logger.info("Sweep cell w=%d gamma0=%.4f: coverage=%.4f width=%.4f", w, gamma0, report.empirical_coverage, report.avg_width)
	return SweepCell(
		w=w,
		gamma0=gamma0,
		coverage=report.empirical_coverage,
		width=report.avg_width,
		n_predictions=report.n_predictions,
		seed=seed,
	)


def sensitivity_sweep(
	series: ReturnSeries,
	cfg: BacktestConfig,
	windows: Sequence[int] = DEFAULT_SWEEP_WINDOWS,
	gamma0s: Sequence[float] = DEFAULT_SWEEP_GAMMA0,
	master_seed: int = 0,
	jobs: int = 1,
	cached: Optional[Mapping[tuple[int, float], SweepCell]] = None,
) -> SweepResult:
	"""
	One run_tcp per (w, gamma0) cell, window-major. Each cell's GBT seed is
	derived from (master_seed, cell index). Failed cells carry their error and
	the sweep continues.
	"""
	cached = cached or {}
	grid = [(w, g) for w in windows for g in gamma0s]
	tasks = [
		(series, cfg, w, g, sweep_seed(master_seed, idx))
		for idx, (w, g) in enumerate(grid)
		if (w, g) not in cached
	]
	logger.info("Sweep: %d cells (%d cached) jobs=%d", len(grid), len(grid) - len(tasks), jobs)

	if jobs > 1 and len(tasks) > 1:
		with ProcessPoolExecutor(max_workers=jobs) as pool:
			computed = list(pool.map(_run_cell, tasks))
	else:
		computed = [_run_cell(task) for task in tasks]

	fresh = {(c.w, c.gamma0): c for c in computed}
	return SweepResult(tuple(cached[key] if key in cached else fresh[key] for key in grid))
