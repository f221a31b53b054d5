"""
Command-line entry points.

    drivetrainer train    asynchronous D3QN training, checkpoints + training log
    drivetrainer eval     benchmark an agent, write report records and table
    drivetrainer replay   render a replay log to PNG frames
    drivetrainer inspect  attention and saliency for one logged step
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import structlog
from pydantic import ValidationError

from drivetrainer.agents import AGENT_NAMES
from drivetrainer.agents.dqgat import DqgatAgent
from drivetrainer.agents.fsm_ttc import FsmTtcConfig
from drivetrainer.config import load_yaml_config, settings
from drivetrainer.errors import ConfigError, DrivetrainerError
from drivetrainer.logger_setup import setup_logger
from drivetrainer.nn.types import NetworkConfig, NetworkKind
from drivetrainer.obs.builder import ObservationBuilder
from drivetrainer.obs.types import ObservationConfig
from drivetrainer.rl.trainer import AsyncTrainer
from drivetrainer.rl.types import TrainerConfig
from drivetrainer.service.benchmark import run_benchmark, write_report
from drivetrainer.service.introspection import attention_report, export_saliency_png, saliency
from drivetrainer.service.render import render_replay
from drivetrainer.service.schema import BenchmarkConfig
from drivetrainer.sim.replay_log import StepRecord, read_replay_log, world_from_record
from drivetrainer.sim.types import NEW_SCENARIOS, SEEN_SCENARIOS, Density, ScenarioId

logger = structlog.get_logger(__name__)

SCENARIO_SETS: dict[str, tuple[ScenarioId, ...]] = {
    "seen": SEEN_SCENARIOS,
    "new": NEW_SCENARIOS,
    "all": SEEN_SCENARIOS + NEW_SCENARIOS,
    "toy": (ScenarioId.STOPPED_LEAD,),
}


def parse_scenarios(value: str) -> list[ScenarioId]:
    """A set name (seen, new, all, toy) or a comma-separated list of scenario ids."""
    if value in SCENARIO_SETS:
        return list(SCENARIO_SETS[value])
    try:
        return [ScenarioId(part.strip()) for part in value.split(",") if part.strip()]
    except ValueError:
        valid = sorted(SCENARIO_SETS) + [s.value for s in ScenarioId]
        raise argparse.ArgumentTypeError(f"unknown scenario in {value!r}; choose from {valid}") from None


def parse_densities(value: str) -> list[Density]:
    if value == "both":
        return [Density.REGULAR, Density.DENSE]
    try:
        return [Density(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"density must be regular, dense or both, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivetrainer", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log-level", default=None, help="override DRIVETRAINER_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a Q-network with asynchronous workers")
    train.add_argument("--config", type=Path, help="TrainerConfig YAML")
    train.add_argument("--scenario-set", type=parse_scenarios, help="seen, new, all, toy or a comma list")
    train.add_argument("--density", type=parse_densities, help="regular, dense or both")
    train.add_argument("--workers", type=int)
    train.add_argument("--steps", type=int, help="total pooled environment steps")
    train.add_argument("--seed", type=int)
    train.add_argument("--network", choices=[k.value for k in NetworkKind])
    train.add_argument("--scale", choices=["desk", "full"], default=None)
    train.add_argument("--out", type=Path, default=None, help="run directory")

    ev = sub.add_parser("eval", help="benchmark an agent over scenario x density")
    ev.add_argument("--agent", default="dqgat", help=f"one of {list(AGENT_NAMES)}")
    ev.add_argument("--checkpoint", type=Path)
    ev.add_argument("--scenarios", type=parse_scenarios, default=list(SEEN_SCENARIOS))
    ev.add_argument("--density", type=parse_densities, default=[Density.REGULAR, Density.DENSE])
    ev.add_argument("--trials", type=int, default=settings.eval_trials)
    ev.add_argument("--seed-base", type=int, default=settings.eval_seed_offset)
    ev.add_argument("--max-recounts", type=int, default=3)
    ev.add_argument("--workers", type=int, default=None)
    ev.add_argument("--report", type=Path, default=Path("report.jsonl"))
    ev.add_argument("--log-dir", type=Path, default=None, help="write one replay log per episode")
    ev.add_argument("--fsm-config", type=Path, default=None, help="FsmTtcConfig YAML for the fsm_ttc agent")

    rp = sub.add_parser("replay", help="render a replay log to PNG frames")
    rp.add_argument("--log", type=Path, required=True)
    rp.add_argument("--out-dir", type=Path, required=True)
    rp.add_argument("--saliency", type=Path, metavar="CKPT", help="overlay saliency of this checkpoint")

    ins = sub.add_parser("inspect", help="attention and saliency at one logged step")
    ins.add_argument("--checkpoint", type=Path, required=True)
    ins.add_argument("--obs-from-log", type=Path, required=True)
    ins.add_argument("--step", type=int, default=0)
    ins.add_argument("--out", type=Path, default=Path("inspect"))
    return parser


# ── Subcommands ──────────────────────────────────────────────────

def trainer_config(args: argparse.Namespace) -> TrainerConfig:
    base = load_yaml_config(args.config, TrainerConfig) if args.config else TrainerConfig()
    kind = NetworkKind(args.network) if args.network else base.network.kind
    updates: dict[str, object] = {}
    if args.scale == "full" or (args.scale is None and args.config is None and settings.scale == "full"):
        updates["network"] = NetworkConfig.full(kind=kind)
        updates["observation"] = ObservationConfig.full()
    elif args.network:
        updates["network"] = base.network.model_copy(update={"kind": kind})
    if args.scenario_set:
        updates["scenarios"] = args.scenario_set
    if args.density:
        updates["densities"] = args.density
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.steps is not None:
        updates["total_steps"] = args.steps
    if args.seed is not None:
        updates["seed"] = args.seed
    # revalidate so nested presets and the dense-raster switch stay consistent
    try:
        return TrainerConfig.model_validate({**base.model_dump(), **updates})
    except ValidationError as e:
        raise ConfigError(f"invalid training options: {e}") from e


def cmd_train(args: argparse.Namespace) -> int:
    config = trainer_config(args)
    out = args.out or settings.runs_dir / f"train_seed{config.seed}"
    summary = AsyncTrainer(config, out).run()
    print(f"training log   {out / 'training_log.jsonl'}")
    for path in summary.checkpoints:
        print(f"checkpoint     {path}")
    print(
        f"env_steps={summary.env_steps} episodes={summary.episodes} "
        f"gradient_steps={summary.gradient_steps} syncs={summary.sync_count} "
        f"final_mean_reward={summary.final_mean_reward}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        config = BenchmarkConfig(
            agent=args.agent,
            scenarios=args.scenarios,
            densities=args.density,
            trials=args.trials,
            seed_base=args.seed_base,
            max_recounts=args.max_recounts,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid eval options: {e}") from e
    fsm = load_yaml_config(args.fsm_config, FsmTtcConfig) if args.fsm_config else None
    report = run_benchmark(config, checkpoint=args.checkpoint, log_dir=args.log_dir, workers=args.workers, fsm=fsm)
    records, table = write_report(report, args.report)
    print(table.read_text(encoding="utf-8"), end="")
    logger.info("report_written", records=str(records), table=str(table))
    return 0


def _saliency_overlay(agent: DqgatAgent, header: object) -> object:
    builder = ObservationBuilder(agent.observation)

    def overlay(record: StepRecord) -> np.ndarray:
        obs = builder.build(world_from_record(header, record))  # type: ignore[arg-type]
        return saliency(agent.net, obs).image()

    return overlay


def cmd_replay(args: argparse.Namespace) -> int:
    log = read_replay_log(args.log)
    overlay = None
    if args.saliency is not None:
        overlay = _saliency_overlay(DqgatAgent.from_checkpoint(args.saliency), log.header)
    frames = render_replay(log, args.out_dir, overlay)  # type: ignore[arg-type]
    print(f"{len(frames)} frames -> {args.out_dir}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    log = read_replay_log(args.obs_from_log)
    if not 0 <= args.step < len(log.steps):
        raise ConfigError(f"--step {args.step} outside 0..{len(log.steps) - 1} of {args.obs_from_log}")
    agent = DqgatAgent.from_checkpoint(args.checkpoint)
    world = world_from_record(log.header, log.steps[args.step])
    obs = ObservationBuilder(agent.observation).build(world)

    report = attention_report(agent.net, obs)
    args.out.mkdir(parents=True, exist_ok=True)
    attention_path = args.out / "attention.json"
    attention_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    saliency_path = export_saliency_png(saliency(agent.net, obs), args.out / "saliency.png")

    print(f"q_values {np.round(report.q_values, 4).tolist()}  action {report.action}")
    for head in report.heads:
        pairs = ", ".join(f"{n}:{w:.3f}" for n, w in zip(head.node_ids, head.weights))
        print(f"layer {head.layer} head {head.head}  {pairs}")
    print(f"attention      {attention_path}")
    print(f"saliency       {saliency_path}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "replay": cmd_replay, "inspect": cmd_inspect}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logger(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (DrivetrainerError, OSError) as exc:
        logger.error("command_failed", command=args.command, error=str(exc))
        print(f"drivetrainer {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
