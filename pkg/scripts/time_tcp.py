#!/usr/bin/env python3
"""
Time a TCP backtest at window w and 2w on a synthetic GARCH series and report
the per-step cost ratio.
"""

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from tempconf.backtest import BacktestConfig, run_tcp  # noqa: E402
from tempconf.benchmarks import GarchParams  # noqa: E402
from tempconf.logging_config import configure_logging  # noqa: E402
from tempconf.quantile_model import GBTConfig  # noqa: E402
from tempconf.synth import gen_garch  # noqa: E402


def time_backtest(n: int, window: int, refit_every: int, seed: int, split_criterion: str) -> dict:
	series = gen_garch(n, GarchParams(omega=0.05, alpha_g=0.1, beta_g=0.85), seed=seed)
	cfg = BacktestConfig(window=window, refit_every=refit_every, gbt=GBTConfig(split_criterion=split_criterion))
	started = time.perf_counter()
	report = run_tcp(series, cfg)
	elapsed = time.perf_counter() - started
	return {
		"window": window,
		"steps": report.n_predictions,
		"seconds": elapsed,
		"seconds_per_step": elapsed / report.n_predictions,
		"coverage": report.empirical_coverage,
	}


def main(argv: Optional[list[str]] = None) -> int:
	parser = argparse.ArgumentParser(
		description="Time TCP backtests at window w and 2w.",
		formatter_class=argparse.RawDescriptionHelpFormatter,
		epilog="""
Examples:
  python scripts/time_tcp.py
  python scripts/time_tcp.py --n 1500 --window 252 --refit-every 5 --json
		""",
	)
	parser.add_argument("--n", type=int, default=1500, help="Series length (default: 1500)")
	parser.add_argument("--window", type=int, default=252, help="Base window w (default: 252)")
	parser.add_argument("--refit-every", type=int, default=1, help="Refit cadence (default: 1)")
	parser.add_argument("--split-criterion", choices=["gradient", "pinball"], default="gradient", help="Tree split criterion (default: gradient)")
	parser.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
	parser.add_argument("--json", action="store_true", help="Output result as JSON")
	args = parser.parse_args(argv)

	configure_logging("WARNING")

	if args.n <= 2 * args.window + 26:
		print(f"ERROR: --n must exceed 2 * window + 26 = {2 * args.window + 26}", file=sys.stderr)
		return 1

	base = time_backtest(args.n, args.window, args.refit_every, args.seed, args.split_criterion)
	doubled = time_backtest(args.n, 2 * args.window, args.refit_every, args.seed, args.split_criterion)
	ratio = doubled["seconds_per_step"] / base["seconds_per_step"]

	if args.json:
		print(json.dumps({"base": base, "doubled": doubled, "per_step_ratio": ratio}, indent=2))
		return 0

	print("=== TCP Timing ===")
	for run in (base, doubled):
		print(f"w={run['window']:<5d} steps={run['steps']:<6d} total={run['seconds']:.2f}s per-step={run['seconds_per_step'] * 1000:.2f}ms coverage={run['coverage']:.4f}")
	print(f"Per-step ratio (2w / w): {ratio:.2f}")
	return 0


if __name__ == "__main__":
	raise SystemExit(main())
