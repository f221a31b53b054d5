#!/usr/bin/env python3
"""
Full benchmark grid: every scenario x density for the learned policy and
the reference agents, merged into one report.

Usage:
    uv run python scripts/run_benchmark_suite.py --checkpoint runs/train_seed0/checkpoints/step_000300000.npz
"""

import argparse
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import structlog

from drivetrainer.config import settings
from drivetrainer.logger_setup import setup_logger
from drivetrainer.service.benchmark import average_cells, format_report, run_benchmark, write_report
from drivetrainer.service.schema import BenchmarkConfig, BenchmarkReport
from drivetrainer.sim.types import NEW_SCENARIOS, SEEN_SCENARIOS, Density

setup_logger()
logger = structlog.get_logger(__name__)

REFERENCE_AGENTS = ["fsm_ttc", "random", "constant:30"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--checkpoint", type=Path, help="DQ-GAT checkpoint; omitted runs the reference agents only")
    parser.add_argument("--trials", type=int, default=settings.eval_trials)
    parser.add_argument("--seed-base", type=int, default=settings.eval_seed_offset)
    parser.add_argument("--out", type=Path, default=settings.runs_dir / "benchmark")
    args = parser.parse_args()

    agents = (["dqgat"] if args.checkpoint else []) + REFERENCE_AGENTS
    scenarios = list(SEEN_SCENARIOS + NEW_SCENARIOS)
    densities = [Density.REGULAR, Density.DENSE]

    merged: BenchmarkReport | None = None
    for agent in agents:
        logger.info("suite_agent_started", agent=agent, scenarios=len(scenarios), trials=args.trials)
        config = BenchmarkConfig(
            agent=agent, scenarios=scenarios, densities=densities, trials=args.trials, seed_base=args.seed_base
        )
        report = run_benchmark(
            config,
            checkpoint=args.checkpoint if agent == "dqgat" else None,
            log_dir=args.out / "logs",
        )
        if merged is None:
            merged = report
        else:
            merged.cells.extend(report.cells)
            if report.provenance.checkpoint_hash:
                merged.provenance.checkpoint_hash = report.provenance.checkpoint_hash

    assert merged is not None
    merged.averages = average_cells(merged.cells)
    records, table = write_report(merged, args.out / "report.jsonl")
    print(format_report(merged), end="")
    logger.info("suite_done", records=str(records), table=str(table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
