"""
Price ingestion, log-returns and the feature matrix consumed by the quantile learners.

All arrays held by the types below are made read-only on construction, so the
objects can be shared between workers without copying.
"""
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Optional, Sequence

import httpx
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .errors import (
	DataParseError,
	DataSourceError,
	DuplicateTimestampError,
	InsufficientDataError,
	PreconditionError,
)

logger = logging.getLogger("tempconf.data")

N_LAGS = 5
VOL_WINDOW = 20
FEATURE_START = N_LAGS + VOL_WINDOW
FEATURE_NAMES = ("lag1", "lag2", "lag3", "lag4", "lag5", "rolling_vol", "sq_lag", "sign_lag")


def _frozen(values: np.ndarray) -> np.ndarray:
	values = np.ascontiguousarray(values)
	values.setflags(write=False)
	return values


class CsvFormat(BaseModel):
	model_config = ConfigDict(frozen=True)

	date_column: str = "date"
	price_column: str = "price"
	delimiter: str = ","
	encoding: str = "utf-8"


@dataclass(frozen=True)
class Rejection:
	line: int
	reason: str

	def as_csv(self) -> str:
		return f"{self.line},{self.reason}"


@dataclass(frozen=True)
class PriceSeries:
	timestamps: np.ndarray
	prices: np.ndarray
	rejected: tuple[Rejection, ...] = ()

	def __post_init__(self) -> None:
		timestamps = np.asarray(self.timestamps, dtype="datetime64[D]")
		prices = np.asarray(self.prices, dtype=float)
		if timestamps.shape != prices.shape or prices.ndim != 1:
			raise PreconditionError("timestamps and prices must be 1-d arrays of equal length")
		if prices.size < 2:
			raise InsufficientDataError(f"need at least 2 prices, got {prices.size}")
		if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
			raise PreconditionError("prices must be finite and positive")
		if np.any(np.diff(timestamps) <= np.timedelta64(0, "D")):
			raise DuplicateTimestampError("timestamps must be strictly increasing")
		object.__setattr__(self, "timestamps", _frozen(timestamps))
		object.__setattr__(self, "prices", _frozen(prices))

	def __len__(self) -> int:
		return int(self.prices.size)


@dataclass(frozen=True)
class ReturnSeries:
	timestamps: np.ndarray
	values: np.ndarray
	percent: bool = True

	def __post_init__(self) -> None:
		values = np.asarray(self.values, dtype=float)
		timestamps = np.asarray(self.timestamps, dtype="datetime64[D]")
		if values.ndim != 1 or timestamps.shape != values.shape:
			raise PreconditionError("timestamps and returns must be 1-d arrays of equal length")
		if not np.all(np.isfinite(values)):
			raise PreconditionError("returns must be finite")
		object.__setattr__(self, "timestamps", _frozen(timestamps))
		object.__setattr__(self, "values", _frozen(values))

	def __len__(self) -> int:
		return int(self.values.size)

	def head(self, n: int) -> "ReturnSeries":
		"""The first n returns, as if the series ended there."""
		return ReturnSeries(self.timestamps[:n], self.values[:n], self.percent)

	def to_prices(self, base: float = 100.0) -> PriceSeries:
		"""Prices reconstructed from `base` by exponentiating cumulative returns."""
		raw = self.values / 100.0 if self.percent else self.values
		prices = base * np.exp(np.concatenate(([0.0], np.cumsum(raw))))
		if len(self) == 0:
			raise InsufficientDataError("cannot reconstruct prices from an empty series")
		# the base price sits on the business day before the first return
		first = np.busday_offset(self.timestamps[0], -1, roll="forward")
		timestamps = np.concatenate(([first], self.timestamps))
		return PriceSeries(timestamps, prices)


@dataclass(frozen=True)
class FeatureRow:
	lags: tuple[float, float, float, float, float]
	rolling_vol: float
	sq_lag: float
	sign_lag: float

	def to_array(self) -> np.ndarray:
		return np.array([*self.lags, self.rolling_vol, self.sq_lag, self.sign_lag], dtype=float)

	@classmethod
	def from_array(cls, values: Sequence[float]) -> "FeatureRow":
		values = [float(v) for v in values]
		if len(values) != len(FEATURE_NAMES):
			raise PreconditionError(f"feature row needs {len(FEATURE_NAMES)} values, got {len(values)}")
		return cls(tuple(values[:N_LAGS]), values[5], values[6], values[7])


@dataclass(frozen=True)
class FeatureMatrix:
	"""
	Row i holds features for time index start_index + i and targets[i] is the
	return at that same index. Features only use returns strictly before it.
	"""

	features: np.ndarray
	targets: np.ndarray
	timestamps: np.ndarray
	start_index: int = FEATURE_START

	def __post_init__(self) -> None:
		features = np.asarray(self.features, dtype=float)
		targets = np.asarray(self.targets, dtype=float)
		if features.ndim != 2 or features.shape[0] != targets.shape[0]:
			raise PreconditionError("features must be 2-d with one row per target")
		if self.start_index < FEATURE_START:
			raise PreconditionError(f"start_index must be >= {FEATURE_START}")
		object.__setattr__(self, "features", _frozen(features))
		object.__setattr__(self, "targets", _frozen(targets))
		object.__setattr__(self, "timestamps", _frozen(np.asarray(self.timestamps, dtype="datetime64[D]")))

	def __len__(self) -> int:
		return int(self.targets.size)

	@property
	def n_features(self) -> int:
		return int(self.features.shape[1])

	def row(self, i: int) -> FeatureRow:
		return FeatureRow.from_array(self.features[i])

	def time_index(self, i: int) -> int:
		return self.start_index + i

	def window(self, lo: int, hi: int) -> "FeatureMatrix":
		"""Rows lo..hi-1 as a new matrix (views, no copy)."""
		return FeatureMatrix(
			self.features[lo:hi],
			self.targets[lo:hi],
			self.timestamps[lo:hi],
			self.start_index + lo,
		)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def read_source(location: str | Path, client: Optional[httpx.Client] = None, timeout_seconds: float = 30.0) -> bytes:
	"""
	Fetch raw CSV bytes from a local path or an http(s) URL.
	"""
	location = str(location)
	if re.match(r"^https?://", location):
		logger.info("Fetching prices: url=%s", location)
		try:
			if client is not None:
				response = client.get(location)
			else:
				with httpx.Client(timeout=timeout_seconds) as own_client:
					response = own_client.get(location)
			response.raise_for_status()
		except httpx.HTTPStatusError as e:
			raise DataSourceError(f"HTTP error {e.response.status_code} fetching {location}")
		except httpx.HTTPError as e:
			raise DataSourceError(f"failed to fetch {location}: {e}")
		return response.content

	path = Path(location)
	if not path.is_file():
		raise DataSourceError(f"input file not found: {path}")
	return path.read_bytes()


def _line_from_parser_error(message: str) -> Optional[int]:
	match = re.search(r"line (\d+)", message)
	return int(match.group(1)) if match else None


def load_prices(source: bytes | BinaryIO, fmt: Optional[CsvFormat] = None) -> PriceSeries:
	"""
	Parse a two-column (date, price) CSV with a header row.

	Rows with a missing or non-positive price are skipped and reported in
	`PriceSeries.rejected`; anything else malformed aborts with the line number.
	Line numbers count the header as line 1.
	"""
	fmt = fmt or CsvFormat()
	raw = source if isinstance(source, (bytes, bytearray)) else source.read()

	try:
		frame = pd.read_csv(
			io.BytesIO(raw),
			dtype=str,
			keep_default_na=False,
			skip_blank_lines=False,
			sep=fmt.delimiter,
			encoding=fmt.encoding,
		)
	except pd.errors.EmptyDataError:
		raise DataParseError("empty input, expected a header row", line=1)
	except pd.errors.ParserError as e:
		raise DataParseError(str(e).strip(), line=_line_from_parser_error(str(e)))
	except UnicodeDecodeError as e:
		raise DataParseError(f"input is not valid {fmt.encoding}: {e}")

	frame.columns = [str(c).strip() for c in frame.columns]
	for column in (fmt.date_column, fmt.price_column):
		if column not in frame.columns:
			raise DataParseError(f"missing column {column!r}", line=1)

	dates_text = frame[fmt.date_column].fillna("").astype(str).str.strip()
	prices_text = frame[fmt.price_column].fillna("").astype(str).str.strip()
	lines = np.arange(len(frame)) + 2

	blank = (dates_text == "") & (prices_text == "")
	dates_text, prices_text, lines = dates_text[~blank], prices_text[~blank], lines[~blank.to_numpy()]

	dates = pd.to_datetime(dates_text, format="ISO8601", errors="coerce")
	bad_dates = dates.isna().to_numpy()
	if bad_dates.any():
		i = int(np.argmax(bad_dates))
		raise DataParseError(f"unparseable date {dates_text.iloc[i]!r}", line=int(lines[i]))

	prices = pd.to_numeric(prices_text, errors="coerce").to_numpy(dtype=float)
	missing = (prices_text == "").to_numpy()
	bad_prices = np.isnan(prices) & ~missing
	if bad_prices.any():
		i = int(np.argmax(bad_prices))
		raise DataParseError(f"unparseable price {prices_text.iloc[i]!r}", line=int(lines[i]))

	rejected: list[Rejection] = []
	keep = np.ones(prices.size, dtype=bool)
	for i in range(prices.size):
		if missing[i]:
			rejected.append(Rejection(int(lines[i]), "missing price"))
			keep[i] = False
		elif not np.isfinite(prices[i]) or prices[i] <= 0:
			rejected.append(Rejection(int(lines[i]), "non-positive price"))
			keep[i] = False
	for r in rejected:
		logger.warning("Rejected price row: line=%s reason=%s", r.line, r.reason)

	days = dates.to_numpy(dtype="datetime64[ns]").astype("datetime64[D]")[keep]
	kept_lines = lines[keep]
	steps = np.diff(days)
	if np.any(steps == np.timedelta64(0, "D")):
		i = int(np.argmax(steps == np.timedelta64(0, "D"))) + 1
		raise DuplicateTimestampError(f"duplicate date {days[i]}", line=int(kept_lines[i]))
	if np.any(steps < np.timedelta64(0, "D")):
		i = int(np.argmax(steps < np.timedelta64(0, "D"))) + 1
		raise DataParseError(f"date {days[i]} is earlier than the previous row", line=int(kept_lines[i]))
	if days.size < 2:
		raise InsufficientDataError(f"need at least 2 valid price rows, got {days.size}")

	logger.info("Loaded %d prices (%d rejected)", days.size, len(rejected))
	return PriceSeries(days, prices[keep], tuple(rejected))


def write_prices_csv(prices: PriceSeries) -> str:
	frame = pd.DataFrame(
		{
			"date": np.datetime_as_string(prices.timestamps, unit="D"),
			"price": prices.prices,
		}
	)
	return frame.to_csv(index=False, lineterminator="\n")


# ---------------------------------------------------------------------------
# Returns and features
# ---------------------------------------------------------------------------


def log_returns(p: PriceSeries, percent: bool = True) -> ReturnSeries:
	"""r_t = ln(P_t / P_{t-1}), times 100 when `percent` is set."""
	values = np.log(p.prices[1:] / p.prices[:-1])
	if percent:
		values = values * 100.0
	return ReturnSeries(p.timestamps[1:], values, percent)


def rolling_volatility(r: ReturnSeries | np.ndarray, window: int = VOL_WINDOW) -> np.ndarray:
	"""
	Population standard deviation of r_{t-window}..r_{t-1}, for t = window..len-1.

	A series exactly `window` long yields an empty array.
	"""
	if window < 1:
		raise PreconditionError("window must be a positive integer")
	values = np.asarray(r.values if isinstance(r, ReturnSeries) else r, dtype=float)
	if values.size < window:
		raise InsufficientDataError(f"series of length {values.size} is shorter than window {window}")
	windows = np.lib.stride_tricks.sliding_window_view(values, window)[:-1]
	dev = windows - windows.mean(axis=1, keepdims=True)
	out = np.sqrt((dev * dev).mean(axis=1))
	# identical values have zero spread
	out[np.ptp(windows, axis=1) == 0.0] = 0.0
	return out


def build_features(r: ReturnSeries) -> FeatureMatrix:
	"""
	One row per t >= 25: r_{t-1..t-5}, 20-day volatility, r_{t-1}^2, sign(r_{t-1}).
	"""
	values = r.values
	n = values.size
	if n < FEATURE_START + 1:
		raise InsufficientDataError(f"need at least {FEATURE_START + 1} returns to build features, got {n}")

	lags = np.column_stack([values[FEATURE_START - k : n - k] for k in range(1, N_LAGS + 1)])
	vol = rolling_volatility(values, VOL_WINDOW)[FEATURE_START - VOL_WINDOW :]
	lag1 = lags[:, 0]
	features = np.column_stack([lags, vol, lag1 * lag1, np.sign(lag1)])
	return FeatureMatrix(features, values[FEATURE_START:], r.timestamps[FEATURE_START:], FEATURE_START)
