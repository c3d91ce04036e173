"""
Monte-Carlo checks of the coverage guarantees on synthetic data.
"""
import logging
import math
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from .benchmarks import GarchParams, normal_quantile
from .conformal import (
	ConformalState,
	ScoreSet,
	adaptive_update,
	conformal_p_values,
	form_interval,
	is_covered,
	split_conformal_interval,
)
from .errors import PreconditionError
from .synth import gen_garch, make_rng, standard_normals

logger = logging.getLogger("tempconf.theory")

P_VALUE_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9)


class TheoremCheck(BaseModel):
	name: str
	passed: bool
	observed: float
	target: float
	lower: float
	upper: float
	details: dict[str, Any] = Field(default_factory=dict)


def _se(values: np.ndarray, fallback: float) -> float:
	if values.size > 1:
		return float(values.std(ddof=1) / math.sqrt(values.size))
	return fallback


def validate_finite_sample(
	alpha: float = 0.05,
	n_cal: int = 1000,
	n_test: int = 5000,
	trials: int = 50,
	seed: int = 0,
) -> TheoremCheck:
	"""
	Split conformal on iid N(0,1) with point prediction 0 and absolute residuals.
	Mean coverage must sit in [1-alpha - 3SE, 1-alpha + 1/(n_cal+1) + 3SE].
	"""
	if trials < 1 or n_cal < 1 or n_test < 1:
		raise PreconditionError("trials, n_cal and n_test must be positive")
	coverages = np.empty(trials)
	for k in range(trials):
		z = standard_normals(make_rng([seed, k]), n_cal + n_test)
		iv = split_conformal_interval(ScoreSet(np.abs(z[:n_cal])), 0.0, alpha)
		test = z[n_cal:]
		coverages[k] = np.count_nonzero((test >= iv.lower) & (test <= iv.upper)) / n_test

	q = alpha * (1.0 - alpha)
	se = _se(coverages, math.sqrt(q / (n_cal + 2) + q / n_test))
	target = 1.0 - alpha
	lower = target - 3.0 * se
	upper = target + 1.0 / (n_cal + 1) + 3.0 * se
	observed = float(coverages.mean())
	check = TheoremCheck(
		name="finite_sample",
		passed=lower <= observed <= upper,
		observed=observed,
		target=target,
		lower=lower,
		upper=upper,
		details={"alpha": alpha, "n_cal": n_cal, "n_test": n_test, "trials": trials, "se": se},
	)
	logger.info("Finite-sample check: coverage=%.4f band=[%.4f, %.4f] passed=%s", observed, lower, upper, check.passed)
	return check


def validate_asymptotic(
	alpha: float = 0.05,
	n: int = 200_000,
	gamma0: float = 0.01,
	lam: float = 0.01,
	beta: float = 0.75,
	seed: int = 0,
	params: GarchParams | None = None,
	coverage_tol: float = 0.005,
	settle_tol: float = 0.05,
	band_scale: float = 1.0,
) -> TheoremCheck:
	"""
	Online threshold updates (kappa = 0) against a fixed symmetric band on a
	GARCH series. Long-run coverage must approach 1-alpha and C must settle.

	The base band is band_scale times the unconditional z * sigma band; a scale
	below 1 starts the run under-covered and makes C do the work.
	"""
	if n < 2:
		raise PreconditionError("n must be at least 2")
	if band_scale <= 0:
		raise PreconditionError(f"band_scale must be positive, got {band_scale}")
	params = params or GarchParams(omega=0.05, alpha_g=0.1, beta_g=0.85)
	r = gen_garch(n, params, seed=seed).values
	half = band_scale * normal_quantile(1.0 - alpha / 2.0) * math.sqrt(params.unconditional_variance)

	state = ConformalState(alpha=alpha, gamma0=gamma0, lam=lam, beta=beta, kappa=0.0)
	covered = 0
	C_half = 0.0
	for t in range(n):
		iv = form_interval(-half, half, state.C, t)
		covered += is_covered(float(r[t]), iv)
		state = adaptive_update(state, float(r[t]), iv)
		if t + 1 == n // 2:
			C_half = state.C

	observed = covered / n
	target = 1.0 - alpha
	drift = abs(state.C - C_half)
	check = TheoremCheck(
		name="asymptotic",
		passed=abs(observed - target) <= coverage_tol and drift < settle_tol,
		observed=observed,
		target=target,
		lower=target - coverage_tol,
		upper=target + coverage_tol,
		details={
			"n": n,
			"base_half_width": half,
			"band_scale": band_scale,
			"C_final": state.C,
			"C_half": C_half,
			"C_drift": drift,
			"settle_tol": settle_tol,
			"garch": params.model_dump(by_alias=True),
		},
	)
	logger.info("Asymptotic check: coverage=%.4f C=%.4f drift=%.4f passed=%s", observed, state.C, drift, check.passed)
	return check


def validate_p_value_superuniformity(
	n_cal: int = 100,
	n_test: int = 1000,
	trials: int = 50,
	seed: int = 0,
	grid: tuple[float, ...] = P_VALUE_GRID,
) -> TheoremCheck:
	"""
	Pooled empirical CDF of conformal p-values on exchangeable data must stay
	below u + 3SE at every grid level u.
	"""
	if trials < 1 or n_cal < 1 or n_test < 1:
		raise PreconditionError("trials, n_cal and n_test must be positive")
	u = np.asarray(grid, dtype=float)
	cdf = np.empty((trials, u.size))
	for k in range(trials):
		scores = np.abs(standard_normals(make_rng([seed, 1_000_003, k]), n_cal + n_test))
		p = conformal_p_values(ScoreSet(scores[:n_cal]), scores[n_cal:])
		cdf[k] = (p[:, None] <= u[None, :]).mean(axis=0)

	mean_cdf = cdf.mean(axis=0)
	if trials > 1:
		se = cdf.std(axis=0, ddof=1) / math.sqrt(trials)
	else:
		se = np.sqrt(u * (1.0 - u) * (1.0 / n_cal + 1.0 / n_test))
	excess = mean_cdf - (u + 3.0 * se)
	worst = int(np.argmax(excess))
	check = TheoremCheck(
		name="p_value_superuniformity",
		passed=bool(np.all(excess <= 0.0)),
		observed=float(mean_cdf[worst]),
		target=float(u[worst]),
		lower=0.0,
		upper=float(u[worst] + 3.0 * se[worst]),
		details={
			"grid": u.tolist(),
			"cdf": mean_cdf.tolist(),
			"se": se.tolist(),
			"n_cal": n_cal,
			"n_test": n_test,
			"trials": trials,
		},
	)
	logger.info("P-value check: worst u=%.2f cdf=%.4f passed=%s", u[worst], mean_cdf[worst], check.passed)
	return check
