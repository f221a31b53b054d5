#!/usr/bin/env python3
"""
Learning sanity check: train (or load) a DQ-GAT checkpoint, benchmark it next
to the random and FSM-TTC agents on shared seeds, and fail on a missed target.

Usage:
    # stopped-lead road, at least 90% success
    uv run python scripts/check_learning_sanity.py --config configs/toy_stopped_lead.yaml \
        --scenario stopped_lead --min-success 90

    # desk-scale merge: beat random by 30 points, finish no slower than FSM-TTC
    uv run python scripts/check_learning_sanity.py --config configs/train_desk.yaml \
        --scenario t_merge --min-margin 30 --check-completion-time
"""

import argparse
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import structlog

from drivetrainer.config import load_yaml_config, settings
from drivetrainer.errors import DrivetrainerError
from drivetrainer.logger_setup import setup_logger
from drivetrainer.rl.trainer import AsyncTrainer
from drivetrainer.rl.types import TrainerConfig
from drivetrainer.service.benchmark import run_benchmark
from drivetrainer.service.schema import BenchmarkCell, BenchmarkConfig
from drivetrainer.sim.types import Density, ScenarioId

setup_logger()
logger = structlog.get_logger(__name__)


def evaluate(agent: str, args: argparse.Namespace, checkpoint: Path | None = None) -> BenchmarkCell:
    config = BenchmarkConfig(
        agent=agent,
        scenarios=[args.scenario],
        densities=[args.density],
        trials=args.trials,
        seed_base=args.seed_base,
    )
    cell = run_benchmark(config, checkpoint=checkpoint, log_dir=args.out / "logs").cells[0]
    logger.info("sanity_eval_done", agent=agent, success_rate=cell.success_rate, ct_mean=cell.ct_mean)
    return cell


def check(args: argparse.Namespace) -> list[str]:
    checkpoint = args.checkpoint
    if checkpoint is None:
        config = load_yaml_config(args.config, TrainerConfig)
        summary = AsyncTrainer(config, args.out / "train").run()
        checkpoint = summary.checkpoints[-1]
        logger.info("sanity_training_done", env_steps=summary.env_steps, checkpoint=str(checkpoint))

    learned = evaluate("dqgat", args, checkpoint)
    rand = evaluate("random", args)
    fsm = evaluate("fsm_ttc", args)
    print(f"{'agent':<10} {'S.R.':>7} {'C.T.':>8}")
    for name, cell in (("dqgat", learned), ("random", rand), ("fsm_ttc", fsm)):
        ct = f"{cell.ct_mean:.2f}" if cell.ct_mean is not None else "-"
        print(f"{name:<10} {cell.success_rate:>6.1f}% {ct:>8}")

    failures = []
    if learned.success_rate < args.min_success:
        failures.append(f"dqgat success {learned.success_rate:.1f}% < {args.min_success:.1f}%")
    if learned.success_rate - rand.success_rate < args.min_margin:
        failures.append(f"dqgat beats random by {learned.success_rate - rand.success_rate:.1f} points < {args.min_margin:.1f}")
    if fsm.success_rate <= rand.success_rate:
        failures.append(f"fsm_ttc success {fsm.success_rate:.1f}% does not exceed random {rand.success_rate:.1f}%")
    if args.check_completion_time and learned.ct_mean is not None and fsm.ct_mean is not None:
        if learned.ct_mean > fsm.ct_mean:
            failures.append(f"dqgat completion {learned.ct_mean:.2f} s slower than fsm_ttc {fsm.ct_mean:.2f} s")
    return failures


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", type=Path, default=Path("configs/toy_stopped_lead.yaml"))
    parser.add_argument("--checkpoint", type=Path, help="skip training and evaluate this checkpoint")
    parser.add_argument("--scenario", type=ScenarioId, default=ScenarioId.STOPPED_LEAD)
    parser.add_argument("--density", type=Density, default=Density.REGULAR)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed-base", type=int, default=settings.eval_seed_offset)
    parser.add_argument("--min-success", type=float, default=0.0)
    parser.add_argument("--min-margin", type=float, default=0.0, help="required S.R. points over the random agent")
    parser.add_argument("--check-completion-time", action="store_true")
    parser.add_argument("--out", type=Path, default=settings.runs_dir / "sanity")
    args = parser.parse_args()

    try:
        failures = check(args)
    except DrivetrainerError as e:
        logger.error("sanity_check_error", detail=str(e))
        return 1
    for failure in failures:
        logger.error("sanity_check_failed", detail=failure)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
