"""
Seeded synthetic return generators.

Randomness comes from numpy's Philox counter-based generator. Normal draws are
produced by inverse-CDF (`scipy.special.ndtri`) of uniforms, so a series is a
pure function of its parameters and seed.
"""
import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import ndtri

from .benchmarks import GarchParams, garch_recursion
from .data import ReturnSeries
from .errors import PreconditionError

logger = logging.getLogger("tempconf.synth")

DEFAULT_START = "2000-01-03"


def make_rng(seed: int | Sequence[int] | np.random.SeedSequence) -> np.random.Generator:
	if not isinstance(seed, np.random.SeedSequence):
		seed = np.random.SeedSequence(seed)
	return np.random.Generator(np.random.Philox(seed))


def standard_normals(rng: np.random.Generator, n: int) -> np.ndarray:
	u = rng.random(n)
	# random() can return exactly 0.0
	np.maximum(u, np.finfo(float).tiny, out=u)
	return ndtri(u)


def business_days(n: int, start: str = DEFAULT_START) -> np.ndarray:
	"""n consecutive weekdays from start, rolled forward off a weekend."""
	return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def gen_iid_gaussian(n: int, mean: float = 0.0, sd: float = 1.0, seed: int = 0, start: str = DEFAULT_START) -> ReturnSeries:
	if n < 1:
		raise PreconditionError(f"n must be >= 1, got {n}")
	if not sd > 0:
		raise PreconditionError(f"sd must be > 0, got {sd}")
	z = standard_normals(make_rng(seed), n)
	return ReturnSeries(business_days(n, start), mean + sd * z, percent=True)


def gen_garch(n: int, p: GarchParams, seed: int = 0, start: str = DEFAULT_START) -> ReturnSeries:
	"""r_t = sigma_t * z_t, started from the stationary variance."""
	if n < 1:
		raise PreconditionError(f"n must be >= 1, got {n}")
	z = standard_normals(make_rng(seed), n)
	out = np.empty(n)
	var = p.unconditional_variance
	for t in range(n):
		if t:
			var = garch_recursion(p, out[t - 1], var)
		out[t] = math.sqrt(var) * z[t]
	return ReturnSeries(business_days(n, start), out, percent=True)


class RegimeSegment(BaseModel):
	model_config = ConfigDict(frozen=True)

	length: int = Field(ge=1)
	volatility: float = Field(gt=0.0)
	mean: float = 0.0


class RegimeSpec(BaseModel):
	model_config = ConfigDict(frozen=True)

	segments: tuple[RegimeSegment, ...]

	@field_validator("segments")
	@classmethod
	def _non_empty(cls, v: tuple[RegimeSegment, ...]) -> tuple[RegimeSegment, ...]:
		if not v:
			raise ValueError("a regime spec needs at least one segment")
		return v

	@property
	def total_length(self) -> int:
		return sum(s.length for s in self.segments)

	@classmethod
	def parse(cls, text: str) -> "RegimeSpec":
		"""
		Parse "length:vol[:mean],length:vol[:mean],..." e.g. "2000:1,2000:3".
		"""
		segments = []
		for chunk in filter(None, (c.strip() for c in text.split(","))):
			parts = chunk.split(":")
			if len(parts) not in (2, 3):
				raise PreconditionError(f"bad regime segment {chunk!r}, expected length:vol[:mean]")
			try:
				length = int(parts[0])
				vol = float(parts[1])
				mean = float(parts[2]) if len(parts) == 3 else 0.0
			except ValueError:
				raise PreconditionError(f"bad regime segment {chunk!r}")
			segments.append(RegimeSegment(length=length, volatility=vol, mean=mean))
		return cls(segments=tuple(segments))


def gen_regime_shift(spec: RegimeSpec, seed: int = 0, start: str = DEFAULT_START) -> ReturnSeries:
	"""Gaussian segments drawn from a single normal stream, each with its own mean and volatility."""
	if not spec.segments:
		raise PreconditionError("a regime spec needs at least one segment")
	n = spec.total_length
	z = standard_normals(make_rng(seed), n)
	mean = np.repeat([s.mean for s in spec.segments], [s.length for s in spec.segments])
	vol = np.repeat([s.volatility for s in spec.segments], [s.length for s in spec.segments])
	logger.debug("Generated %d-segment regime series of length %d", len(spec.segments), n)
	return ReturnSeries(business_days(n, start), mean + vol * z, percent=True)
