"""
Command-line entry point.

Subcommands: backtest, sweep, simulate and validate-theory. Exit codes:
0 success, 1 usage, 2 data, 3 model failure, 4 theorem validation failure.
"""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from pydantic import ValidationError

from .backtest import (
	DEFAULT_SWEEP_GAMMA0,
	DEFAULT_SWEEP_WINDOWS,
	BacktestConfig,
	BacktestReport,
	SweepCell,
	run_model,
	sensitivity_sweep,
	sweep_seed,
	warmup_table,
	window_summary,
)
from .benchmarks import GarchParams
from .conformal import ConformalState, ModelId
from .data import CsvFormat, ReturnSeries, load_prices, log_returns, read_source
from .database import init_db
from .errors import DataParseError, PreconditionError, TempconfError
from .logging_config import configure_logging
from .quantile_model import GBTConfig, dump_model
from .settings import load_config_file, load_settings, merge_config
from .storage import (
	RunManifest,
	config_digest,
	digest_bytes,
	digest_file,
	make_run_id,
	run_directory,
	save_json,
	save_prices_csv,
	save_records_csv,
	save_sweep_csv,
	utc_timestamp,
	write_manifest,
)
from . import cache
from .synth import DEFAULT_START, RegimeSpec, gen_garch, gen_iid_gaussian, gen_regime_shift
from .theory import validate_asymptotic, validate_finite_sample, validate_p_value_superuniformity

logger = logging.getLogger("tempconf.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3
EXIT_VALIDATION = 4

MODEL_NAMES = {ModelId.TCP: "TCP", ModelId.QR: "QR", ModelId.GARCH: "GARCH", ModelId.HIST: "Hist"}
ALL_MODELS = (ModelId.TCP, ModelId.QR, ModelId.GARCH, ModelId.HIST)

# Defaults for every option a config file may set. CLI flags default to None
# so that merge_config can tell "not given" apart from an explicit value.
RUN_DEFAULTS: dict[str, Any] = {
	"model": "tcp",
	"alpha": 0.05,
	"window": 252,
	"gamma0": 0.01,
	"lam": 0.01,
	"beta": 0.75,
	"kappa": 0.0,
	"refit_every": 1,
	"n_trees": 100,
	"max_depth": 3,
	"shrinkage": 0.1,
	"min_leaf": 20,
	"subsample": 1.0,
	"split_criterion": "gradient",
	"seed": 0,
	"threshold_mode": "additive",
	"threshold_method": "empirical",
	"qr_mode": "paper",
	"qr_train_fraction": 0.3,
	"hist_window": 252,
	"garch_refit_every": 0,
	"garch_demean": False,
	"date_column": "date",
	"price_column": "price",
	"delimiter": ",",
	"returns": "percent",
	"grid_w": None,
	"grid_gamma0": None,
	"jobs": 1,
}
# config-file spellings that differ from the option destination
FILE_KEY_ALIASES = {"lambda": "lam", "w": "grid_w", "gamma0_grid": "grid_gamma0"}


class UsageError(Exception):
	def __init__(self, message: str, usage: str = "") -> None:
		super().__init__(message)
		self.usage = usage


class ArgumentParser(argparse.ArgumentParser):
	"""argparse parser that raises instead of exiting with status 2."""

	def error(self, message: str) -> None:  # type: ignore[override]
		raise UsageError(message, self.format_usage())


@dataclasses.dataclass(frozen=True)
class Asset:
	label: str
	location: str
	returns: ReturnSeries
	digest: str


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
	p.add_argument("--output-dir", type=Path, default=None, help="Output directory (default: $TEMPCONF_OUTPUT_DIR or ./data/runs)")
	p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR (default: $LOG_LEVEL or INFO)")


def _add_run_options(p: argparse.ArgumentParser) -> None:
	p.add_argument("--input", action="append", required=True, help="Price CSV path or http(s) URL; repeat for several assets")
	p.add_argument("--label", action="append", default=None, help="Asset label per --input (default: file stem)")
	p.add_argument("--config", type=Path, default=None, help="TOML config file; CLI flags take precedence")
	p.add_argument("--date-column", default=None, help="Date column name (default: date)")
	p.add_argument("--price-column", default=None, help="Price column name (default: price)")
	p.add_argument("--delimiter", default=None, help="CSV delimiter (default: ,)")
	p.add_argument("--returns", choices=["percent", "log"], default=None, help="Return units: percent log-returns (default) or raw log-returns")
	p.add_argument("--alpha", type=float, default=None, help="Miscoverage level (default: 0.05)")
	p.add_argument("--lambda", dest="lam", type=float, default=None, help="Learning-rate decay lambda (default: 0.01)")
	p.add_argument("--beta", type=float, default=None, help="Learning-rate exponent beta in (0.5, 1] (default: 0.75)")
	p.add_argument("--kappa", type=float, default=None, help="Extra shrink on covered steps (default: 0.0)")
	p.add_argument("--refit-every", type=int, default=None, help="Refit the quantile pair every N steps (default: 1)")
	p.add_argument("--n-trees", type=int, default=None, help="Boosting stages (default: 100)")
	p.add_argument("--max-depth", type=int, default=None, help="Tree depth (default: 3)")
	p.add_argument("--shrinkage", type=float, default=None, help="Learning rate of the booster (default: 0.1)")
	p.add_argument("--min-leaf", type=int, default=None, help="Minimum rows per leaf (default: 20)")
	p.add_argument("--subsample", type=float, default=None, help="Row fraction per stage (default: 1.0)")
	p.add_argument("--split-criterion", choices=["gradient", "pinball"], default=None, help="Tree split criterion (default: gradient)")
	p.add_argument("--seed", type=int, default=None, help="Master seed (default: 0)")
	p.add_argument("--threshold-mode", choices=["additive", "online_only", "window_only"], default=None, help="How window and online thresholds combine (default: additive)")
	p.add_argument("--threshold-method", choices=["empirical", "finite_sample"], default=None, help="Window quantile rule (default: empirical)")
	p.add_argument("--no-registry", action="store_true", help="Do not record the run in the registry database")
	_add_common(p)


def build_parser() -> ArgumentParser:
	parser = ArgumentParser(
		prog="tempconf",
		description="Temporal conformal prediction intervals for return series.",
		formatter_class=argparse.RawDescriptionHelpFormatter,
		epilog="""
Examples:
  tempconf backtest --model tcp --alpha 0.05 --window 252 --gamma0 0.01 --input spx.csv
  tempconf backtest --model all --input spx.csv --input btc.csv --from 2020-02-01 --to 2020-04-30
  tempconf sweep --input spx.csv --refit-every 5 --jobs 4
  tempconf simulate garch --n 5000 --seed 7
  tempconf validate-theory --trials 50
		""",
	)
	sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

	bt = sub.add_parser("backtest", help="Walk-forward backtest of one or all models")
	_add_run_options(bt)
	bt.add_argument("--model", choices=["tcp", "qr", "garch", "hist", "all"], default=None, help="Model to run (default: tcp)")
	bt.add_argument("--window", type=int, default=None, help="Training window w (default: 252)")
	bt.add_argument("--gamma0", type=float, default=None, help="Initial learning rate (default: 0.01)")
	bt.add_argument("--qr-mode", choices=["paper", "causal"], default=None, help="Static QR training span (default: paper, trains on all rows)")
	bt.add_argument("--qr-train-fraction", type=float, default=None, help="Leading fraction used by --qr-mode causal (default: 0.3)")
	bt.add_argument("--hist-window", type=int, default=None, help="Historical-simulation window (default: 252)")
	bt.add_argument("--garch-refit-every", type=int, default=None, help="Refit GARCH every N steps, 0 = never (default: 0)")
	bt.add_argument("--garch-demean", action=argparse.BooleanOptionalAction, default=None, help="Fit GARCH around the training mean")
	bt.add_argument("--from", dest="date_from", default=None, help="Start date of the window summary (ISO-8601)")
	bt.add_argument("--to", dest="date_to", default=None, help="End date of the window summary (ISO-8601)")
	resume = bt.add_mutually_exclusive_group()
	resume.add_argument("--state-in", type=Path, default=None, help="Resume TCP from a saved state JSON")
	resume.add_argument("--state-from-run", default=None, metavar="RUN_ID", help="Resume TCP from the final state of a registered run")
	bt.add_argument("--dump-models", action="store_true", help="Write the last fitted TCP quantile pair as JSON")
	bt.set_defaults(handler=cmd_backtest)

	sw = sub.add_parser("sweep", help="TCP sensitivity sweep over window and gamma0")
	_add_run_options(sw)
	sw.add_argument("--w", dest="grid_w", type=int, action="append", default=None, help="Window value; repeat for a grid (default: 100 252 500)")
	sw.add_argument("--gamma0", dest="grid_gamma0", type=float, action="append", default=None, help="gamma0 value; repeat for a grid (default: 0.005 0.01 0.05)")
	sw.add_argument("--jobs", type=int, default=None, help="Parallel worker processes (default: 1)")
	sw.add_argument("--no-cache", action="store_true", help="Recompute cells already in the registry")
	sw.set_defaults(handler=cmd_sweep)

	sim = sub.add_parser("simulate", help="Write a synthetic price series")
	gens = sim.add_subparsers(dest="generator", required=True, parser_class=ArgumentParser)
	g_iid = gens.add_parser("gaussian", help="iid Gaussian returns")
	g_iid.add_argument("--n", type=int, default=1000, help="Number of returns (default: 1000)")
	g_iid.add_argument("--mean", type=float, default=0.0, help="Return mean (default: 0)")
	g_iid.add_argument("--sd", type=float, default=1.0, help="Return standard deviation (default: 1)")
	g_garch = gens.add_parser("garch", help="GARCH(1,1) returns")
	g_garch.add_argument("--n", type=int, default=1000, help="Number of returns (default: 1000)")
	g_garch.add_argument("--omega", type=float, default=0.05, help="omega (default: 0.05)")
	g_garch.add_argument("--garch-alpha", type=float, default=0.1, help="ARCH coefficient (default: 0.1)")
	g_garch.add_argument("--garch-beta", type=float, default=0.85, help="GARCH coefficient (default: 0.85)")
	g_regime = gens.add_parser("regime", help="Piecewise Gaussian regimes")
	g_regime.add_argument("--segments", required=True, help='Segments "length:vol[:mean],..." e.g. "2000:1,2000:3"')
	for g in (g_iid, g_garch, g_regime):
		g.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
		g.add_argument("--start", default=DEFAULT_START, help=f"First business day (default: {DEFAULT_START})")
		g.add_argument("--output", type=Path, default=None, help="CSV path (default: a run directory under --output-dir)")
		_add_common(g)
		g.set_defaults(handler=cmd_simulate)

	vt = sub.add_parser("validate-theory", help="Monte-Carlo checks of the coverage guarantees")
	vt.add_argument("--alpha", type=float, default=0.05, help="Miscoverage level (default: 0.05)")
	vt.add_argument("--target-coverage", type=float, default=None, help="Expected 1 - alpha; a mismatch is a usage error")
	vt.add_argument("--trials", type=int, default=50, help="Monte-Carlo trials (default: 50)")
	vt.add_argument("--n-cal", type=int, default=1000, help="Calibration size (default: 1000)")
	vt.add_argument("--n-test", type=int, default=5000, help="Test size per trial (default: 5000)")
	vt.add_argument("--n", type=int, default=200_000, help="Length of the online-update run (default: 200000)")
	vt.add_argument("--gamma0", type=float, default=0.01, help="Initial learning rate (default: 0.01)")
	vt.add_argument("--lambda", dest="lam", type=float, default=0.01, help="Learning-rate decay (default: 0.01)")
	vt.add_argument("--beta", type=float, default=0.75, help="Learning-rate exponent (default: 0.75)")
	vt.add_argument("--band-scale", type=float, default=1.0, help="Base band of the online-update run as a multiple of z * sigma (default: 1.0)")
	vt.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
	vt.add_argument("--skip", action="append", choices=["finite", "asymptotic", "pvalue"], default=[], help="Skip a check; repeatable")
	_add_common(vt)
	vt.set_defaults(handler=cmd_validate_theory)

	return parser


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _fmt(x: Optional[float]) -> str:
	return "-" if x is None else f"{x:.4f}"


def _resolve_options(args: argparse.Namespace) -> dict[str, Any]:
	file_values = None
	if args.config is not None:
		file_values = {FILE_KEY_ALIASES.get(k, k): v for k, v in load_config_file(args.config).items()}
		for key in ("grid_w", "grid_gamma0"):
			if key in file_values and not isinstance(file_values[key], list):
				file_values[key] = [file_values[key]]
	cli_values = {k: v for k, v in vars(args).items() if k in RUN_DEFAULTS}
	return merge_config(RUN_DEFAULTS, file_values, cli_values)


def _backtest_config(opts: dict[str, Any], model: str) -> BacktestConfig:
	gbt = GBTConfig(
		n_trees=opts["n_trees"],
		max_depth=opts["max_depth"],
		shrinkage=opts["shrinkage"],
		min_leaf=opts["min_leaf"],
		subsample=opts["subsample"],
		seed=opts["seed"],
		split_criterion=opts["split_criterion"],
	)
	return BacktestConfig(
		model_id=model,
		alpha=opts["alpha"],
		window=opts["window"],
		gamma0=opts["gamma0"],
		lam=opts["lam"],
		beta=opts["beta"],
		kappa=opts["kappa"],
		refit_every=opts["refit_every"],
		gbt=gbt,
		qr_mode=opts["qr_mode"],
		qr_train_fraction=opts["qr_train_fraction"],
		threshold_mode=opts["threshold_mode"],
		threshold_method=opts["threshold_method"],
		hist_window=opts["hist_window"],
		garch_refit_every=opts["garch_refit_every"],
		garch_demean=opts["garch_demean"],
	)


def _asset_label(location: str) -> str:
	name = location.rstrip("/").rsplit("/", 1)[-1]
	return Path(name).stem or "asset"


def _load_assets(args: argparse.Namespace, opts: dict[str, Any]) -> list[Asset]:
	labels = args.label or []
	if labels and len(labels) != len(args.input):
		raise UsageError(f"got {len(labels)} --label values for {len(args.input)} --input values")
	fmt = CsvFormat(date_column=opts["date_column"], price_column=opts["price_column"], delimiter=opts["delimiter"])
	assets = []
	for k, location in enumerate(args.input):
		raw = read_source(location)
		try:
			prices = load_prices(raw, fmt)
		except PreconditionError as e:
			raise DataParseError(str(e))
		for rejection in prices.rejected:
			print(rejection.as_csv(), file=sys.stderr)
		label = labels[k] if labels else _asset_label(location)
		returns = log_returns(prices, percent=opts["returns"] == "percent")
		assets.append(Asset(label=label, location=location, returns=returns, digest=digest_bytes(raw)))
	return assets


def _open_registry(args: argparse.Namespace, database_url: str) -> bool:
	if getattr(args, "no_registry", False):
		return False
	init_db(database_url)
	return True


def _config_echo(opts: dict[str, Any], **extra: Any) -> dict[str, Any]:
	echo = dict(opts)
	echo.update(extra)
	return echo


def _initial_state(args: argparse.Namespace, registry: bool, cfg: BacktestConfig) -> Optional[ConformalState]:
	"""State from --state-in or --state-from-run; the snapshot's schedule wins over the configured one."""
	if args.state_in is not None:
		try:
			state = ConformalState.from_json(args.state_in.read_bytes())
		except FileNotFoundError:
			raise UsageError(f"state file not found: {args.state_in}")
	elif args.state_from_run is not None:
		if not registry:
			raise UsageError("--state-from-run needs the registry; drop --no-registry")
		entry = cache.get_run(args.state_from_run, model=ModelId.TCP.value)
		if entry is None or "final_state" not in entry["summary"]:
			raise UsageError(f"no TCP state recorded for run {args.state_from_run}")
		state = ConformalState.model_validate(entry["summary"]["final_state"])
		logger.info("Resuming from run %s (%s) at t=%d", entry["run_id"], entry["label"], state.t)
	else:
		return None

	configured = cfg.initial_state()
	differing = [
		name
		for name in ("alpha", "gamma0", "lam", "beta", "kappa")
		if getattr(state, name) != getattr(configured, name)
	]
	if differing:
		logger.warning(
			"Resumed state overrides configured %s: %s",
			", ".join(differing),
			", ".join(f"{n}={getattr(state, n)} (configured {getattr(configured, n)})" for n in differing),
		)
	return state


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------


def cmd_backtest(args: argparse.Namespace) -> int:
	settings = load_settings()
	opts = _resolve_options(args)
	if opts["model"] == "all":
		models = list(ALL_MODELS)
	else:
		models = [ModelId(opts["model"])]
	configs = {m: _backtest_config(opts, m.value) for m in models}
	registry = _open_registry(args, settings.database_url)
	initial_state = _initial_state(args, registry, configs[models[0]])

	assets = _load_assets(args, opts)
	output_dir = args.output_dir or settings.output_dir

	rows: list[tuple[str, str, BacktestReport]] = []
	for asset in assets:
		echo = _config_echo(opts, label=asset.label, input=asset.location)
		if initial_state is not None:
			echo["initial_state"] = initial_state.model_dump(by_alias=True)
		run_id = make_run_id("backtest", echo, [asset.digest])
		directory = run_directory(output_dir, "backtest", run_id, asset.label)
		manifest = RunManifest(
			run_id=run_id,
			command="backtest",
			master_seed=opts["seed"],
			config=echo,
			input_digests={asset.label: asset.digest},
			started_at=utc_timestamp(),
		)
		files: list[str] = []
		windows: dict[str, Any] = {}
		summaries: dict[ModelId, dict[str, Any]] = {}

		for model in models:
			report = run_model(asset.returns, configs[model], initial_state=initial_state)
			rows.append((asset.label, MODEL_NAMES[model], report))
			summary = {
				"asset": asset.label,
				"run_id": run_id,
				"manifest": "manifest.json",
				**report.summary(),
			}
			files.append(save_records_csv(directory / f"records_{model.value}.csv", report.records))
			files.append(save_json(directory / f"summary_{model.value}.json", summary))
			if report.final_state is not None:
				files.append(save_json(directory / f"state_{model.value}.json", report.final_state.model_dump(by_alias=True)))
			if args.dump_models and model is ModelId.TCP and report.models is not None:
				lower, upper = report.models
				files.append(save_json(directory / "models_tcp.json", {"lower": dump_model(lower), "upper": dump_model(upper)}))
			if args.date_from or args.date_to:
				windows[model.value] = window_summary(report, args.date_from, args.date_to).model_dump()
			summaries[model] = summary

		if windows:
			files.append(save_json(directory / "window_summary.json", windows))
		if len(models) > 1:
			table = warmup_table(len(asset.returns), configs[models[0]])
			files.append(save_json(directory / "warmup.json", [entry.model_dump(mode="json") for entry in table]))
		final = write_manifest(directory, manifest, files)
		logger.info("Backtest outputs for %s in %s (%d files)", asset.label, directory, len(final.files))
		if registry:
			for model, summary in summaries.items():
				cache.upsert_run(
					run_id,
					"backtest",
					f"{asset.label}:{model.value}",
					config_digest(echo),
					asset.digest,
					summary,
					manifest=final.model_dump(),
				)

	print("=== Backtest Results ===")
	print(f"{'Asset':<12} {'Model':<6} {'Empirical Coverage':>18} {'Avg. Interval Width':>20} {'Predictions':>11}")
	for label, model_name, report in rows:
		print(
			f"{label:<12} {model_name:<6} {report.empirical_coverage:>18.4f} {report.avg_width:>20.4f} {report.n_predictions:>11d}"
		)
	return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
	settings = load_settings()
	opts = _resolve_options(args)
	windows = list(opts["grid_w"] or DEFAULT_SWEEP_WINDOWS)
	gamma0s = list(opts["grid_gamma0"] or DEFAULT_SWEEP_GAMMA0)
	if opts["jobs"] < 1:
		raise UsageError("--jobs must be >= 1")
	cfg = _backtest_config(opts, "tcp")

	assets = _load_assets(args, opts)
	output_dir = args.output_dir or settings.output_dir
	registry = _open_registry(args, settings.database_url)
	use_cache = registry and not args.no_cache

	succeeded = 0
	for asset in assets:
		echo = _config_echo(opts, label=asset.label, input=asset.location, grid_w=windows, grid_gamma0=gamma0s)
		run_id = make_run_id("sweep", echo, [asset.digest])
		directory = run_directory(output_dir, "sweep", run_id, asset.label)
		manifest = RunManifest(
			run_id=run_id,
			command="sweep",
			master_seed=opts["seed"],
			config=echo,
			input_digests={asset.label: asset.digest},
			started_at=utc_timestamp(),
		)

		cell_digests = {}
		for idx, (w, g) in enumerate((w, g) for w in windows for g in gamma0s):
			cell_echo = _config_echo(opts, window=w, gamma0=g, seed=sweep_seed(opts["seed"], idx))
			for key in ("model", "grid_w", "grid_gamma0", "jobs"):
				cell_echo.pop(key, None)
			cell_digests[(w, g)] = config_digest(cell_echo)

		cached: dict[tuple[int, float], SweepCell] = {}
		if use_cache:
			for key, digest in cell_digests.items():
				hit = cache.get_cached_summary("sweep-cell", asset.label, digest, asset.digest)
				if hit is not None:
					cached[key] = SweepCell(**hit)
			if cached:
				logger.info("Reusing %d cached sweep cells for %s", len(cached), asset.label)

		result = sensitivity_sweep(
			asset.returns,
			cfg,
			windows=windows,
			gamma0s=gamma0s,
			master_seed=opts["seed"],
			jobs=opts["jobs"],
			cached=cached,
		)
		succeeded += result.n_succeeded

		if registry:
			for c in result.cells:
				if c.ok and (c.w, c.gamma0) not in cached:
					cache.upsert_run(run_id, "sweep-cell", asset.label, cell_digests[(c.w, c.gamma0)], asset.digest, dataclasses.asdict(c))

		files = [
			save_sweep_csv(directory / "sweep.csv", result),
			save_json(
				directory / "sweep.json",
				{
					"asset": asset.label,
					"run_id": run_id,
					"manifest": "manifest.json",
					"cells": [dataclasses.asdict(c) for c in result.cells],
				},
			),
		]
		write_manifest(directory, manifest, files)

		print(f"=== Sensitivity Sweep: {asset.label} ===")
		print(f"{'w':>5} {'gamma0':>8} {'Coverage':>10} {'Width':>10}")
		for c in result.cells:
			if c.ok:
				print(f"{c.w:>5d} {c.gamma0:>8.4f} {_fmt(c.coverage):>10} {_fmt(c.width):>10}")
			else:
				print(f"{c.w:>5d} {c.gamma0:>8.4f} {'error':>10} {'error':>10}")

	return EXIT_OK if succeeded else EXIT_MODEL


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
	settings = load_settings()
	if args.generator == "gaussian":
		series = gen_iid_gaussian(args.n, args.mean, args.sd, seed=args.seed, start=args.start)
		params: dict[str, Any] = {"n": args.n, "mean": args.mean, "sd": args.sd}
	elif args.generator == "garch":
		p = GarchParams(omega=args.omega, alpha_g=args.garch_alpha, beta_g=args.garch_beta)
		series = gen_garch(args.n, p, seed=args.seed, start=args.start)
		params = {"n": args.n, **p.model_dump(by_alias=True)}
	else:
		spec = RegimeSpec.parse(args.segments)
		series = gen_regime_shift(spec, seed=args.seed, start=args.start)
		params = {"segments": [s.model_dump() for s in spec.segments]}

	prices = series.to_prices(100.0)
	echo = {"generator": args.generator, "seed": args.seed, "start": args.start, **params}
	if args.output is not None:
		path = Path(save_prices_csv(args.output, prices))
	else:
		run_id = make_run_id("simulate", echo, [])
		directory = run_directory(args.output_dir or settings.output_dir, "simulate", run_id, args.generator)
		path = Path(save_prices_csv(directory / "prices.csv", prices))
		manifest = RunManifest(run_id=run_id, command="simulate", master_seed=args.seed, config=echo, started_at=utc_timestamp())
		write_manifest(directory, manifest, [path])

	print("=== Simulation ===")
	print(f"Generator : {args.generator}")
	print(f"Returns   : {len(series)}")
	print(f"Rows      : {len(prices)}")
	print(f"File      : {path}")
	print(f"SHA-256   : {digest_file(path)}")
	return EXIT_OK


# ---------------------------------------------------------------------------
# validate-theory
# ---------------------------------------------------------------------------


def cmd_validate_theory(args: argparse.Namespace) -> int:
	settings = load_settings()
	if not 0.0 < args.alpha < 1.0:
		raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
	if args.target_coverage is not None and abs(args.target_coverage - (1.0 - args.alpha)) > 1e-9:
		raise UsageError(f"--target-coverage {args.target_coverage} does not equal 1 - alpha = {1.0 - args.alpha:.4f}")
	if min(args.trials, args.n_cal, args.n_test, args.n) < 1:
		raise UsageError("--trials, --n-cal, --n-test and --n must be positive")

	checks = []
	if "finite" not in args.skip:
		checks.append(validate_finite_sample(args.alpha, args.n_cal, args.n_test, args.trials, args.seed))
	if "asymptotic" not in args.skip:
		checks.append(
			validate_asymptotic(args.alpha, args.n, args.gamma0, args.lam, args.beta, args.seed, band_scale=args.band_scale)
		)
	if "pvalue" not in args.skip:
		checks.append(validate_p_value_superuniformity(trials=args.trials, seed=args.seed))

	echo = {
		k: v
		for k, v in vars(args).items()
		if k not in ("handler", "output_dir", "log_level", "command")
	}
	run_id = make_run_id("validate-theory", echo, [])
	directory = run_directory(args.output_dir or settings.output_dir, "validate-theory", run_id)
	manifest = RunManifest(run_id=run_id, command="validate-theory", master_seed=args.seed, config=echo, started_at=utc_timestamp())
	passed = all(c.passed for c in checks)
	path = save_json(
		directory / "validation.json",
		{
			"run_id": run_id,
			"manifest": "manifest.json",
			"passed": passed,
			"checks": [c.model_dump() for c in checks],
		},
	)
	write_manifest(directory, manifest, [path])

	print("=== Theory Validation ===")
	print(f"{'Check':<24} {'Observed':>9} {'Lower':>9} {'Upper':>9}  Result")
	for c in checks:
		print(f"{c.name:<24} {c.observed:>9.4f} {c.lower:>9.4f} {c.upper:>9.4f}  {'PASS' if c.passed else 'FAIL'}")
	return EXIT_OK if passed else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
	parser = build_parser()
	try:
		args = parser.parse_args(argv)
	except UsageError as e:
		print(e.usage, file=sys.stderr, end="")
		print(f"error: {e}", file=sys.stderr)
		return EXIT_USAGE
	except SystemExit as e:
		# --help
		return int(e.code or 0)

	configure_logging(args.log_level)
	handler: Callable[[argparse.Namespace], int] = args.handler
	try:
		return handler(args)
	except UsageError as e:
		print(f"error: {e}", file=sys.stderr)
		return EXIT_USAGE
	except ValidationError as e:
		print(f"error: invalid configuration: {e}", file=sys.stderr)
		return EXIT_USAGE
	except TempconfError as e:
		print(f"ERROR: {e}", file=sys.stderr)
		return e.exit_code
	except Exception as e:
		logger.exception("Unexpected failure in %s", args.command)
		print(f"ERROR: {e}", file=sys.stderr)
		return EXIT_MODEL


if __name__ == "__main__":
	raise SystemExit(main())
