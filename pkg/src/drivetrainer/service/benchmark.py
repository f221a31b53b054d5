"""
Benchmark Harness — S.R. / C.T. over scenario × density × agent.

• Episodes run in a thread pool, one fresh agent instance per episode
• Evaluation seeds start at or above the training seed limit; jammed
  episodes are recounted with fresh seeds
• Live reports and reports rebuilt from replay logs go through the same
  `summarize`, so the two agree field for field
"""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import structlog

from drivetrainer.agents import make_agent
from drivetrainer.agents.base import Policy
from drivetrainer.agents.dqgat import DqgatAgent
from drivetrainer.agents.fsm_ttc import FsmTtcConfig
from drivetrainer.config import TRAIN_SEED_LIMIT, settings
from drivetrainer.errors import ConfigError
from drivetrainer.obs.builder import ObservationBuilder
from drivetrainer.service.schema import (
    BenchmarkAverage,
    BenchmarkCell,
    BenchmarkConfig,
    BenchmarkReport,
    EpisodeRecord,
    Provenance,
)
from drivetrainer.sim.replay_log import ReplayHeader, ReplayLogWriter, read_replay_log
from drivetrainer.sim.types import DT, Density, Event, ScenarioConfig, ScenarioId
from drivetrainer.sim.world import spawn_scenario

logger = structlog.get_logger(__name__)

AgentFactory = Callable[[], Policy]
LOG_SUFFIX = ".replay.jsonl"

_SCENARIO_ORDER = {s: k for k, s in enumerate(ScenarioId)}
_DENSITY_ORDER = {d: k for k, d in enumerate(Density)}


def trial_seed(seed_base: int, trials: int, trial: int, attempt: int) -> int:
    """Attempt 0 uses seed_base + trial; each recount moves one block of `trials` further."""
    return seed_base + attempt * trials + trial


def agent_factory(
    name: str,
    checkpoint: str | Path | None = None,
    seed: int = 0,
    fsm: FsmTtcConfig | None = None,
) -> tuple[AgentFactory, str | None]:
    """Per-episode agent constructor plus the checkpoint hash for provenance."""
    if name == "dqgat":
        prototype = make_agent(name, checkpoint=checkpoint)
        assert isinstance(prototype, DqgatAgent)
        return (lambda: DqgatAgent(prototype.net, prototype.observation)), prototype.checkpoint_hash
    make_agent(name, seed=seed, fsm=fsm)
    return (lambda: make_agent(name, seed=seed, fsm=fsm)), None


def log_path_for(log_dir: Path, record_key: tuple[str, ScenarioId, Density, int, int]) -> Path:
    agent, scenario, density, trial, attempt = record_key
    slug = agent.replace(":", "-")
    return log_dir / slug / f"{scenario.value}_{density.value}_t{trial:04d}_a{attempt}{LOG_SUFFIX}"


def run_episode(agent: Policy, scenario: ScenarioConfig, header: ReplayHeader, log_path: Path | None = None) -> EpisodeRecord:
    world = spawn_scenario(scenario)
    agent.reset(world)
    builder = ObservationBuilder(getattr(agent, "observation", None)) if agent.needs_observation else None

    def loop(write: Callable[..., object] | None) -> int:
        steps = 0
        while not world.terminal:
            obs = builder.build(world) if builder is not None else None
            outcome = world.step(agent.act(world, obs))
            steps += 1
            if write is not None:
                write(outcome)
        return steps

    if log_path is not None:
        with ReplayLogWriter(log_path, header) as writer:
            steps = loop(writer.write)
    else:
        steps = loop(None)

    return EpisodeRecord(
        scenario=scenario.scenario_id,
        density=scenario.density,
        agent=header.agent,
        trial=header.trial,
        attempt=header.attempt,
        seed=scenario.seed,
        events=world.events.names(),
        steps=steps,
        dt=DT,
    )


def run_benchmark(
    config: BenchmarkConfig,
    checkpoint: str | Path | None = None,
    log_dir: str | Path | None = None,
    workers: int | None = None,
    fsm: FsmTtcConfig | None = None,
) -> BenchmarkReport:
    if config.seed_base < TRAIN_SEED_LIMIT:
        raise ConfigError(f"seed_base {config.seed_base} overlaps the training seed range [0, {TRAIN_SEED_LIMIT})")
    factory, checkpoint_hash = agent_factory(config.agent, checkpoint, fsm=fsm)
    provenance = Provenance(
        config_hash=config.config_hash(), checkpoint_hash=checkpoint_hash, seed_base=config.seed_base
    )
    logs = Path(log_dir) if log_dir is not None else None

    def run_trial(task: tuple[ScenarioId, Density, int]) -> list[EpisodeRecord]:
        scenario, density, trial = task
        records: list[EpisodeRecord] = []
        for attempt in range(config.max_recounts + 1):
            seed = trial_seed(config.seed_base, config.trials, trial, attempt)
            header = ReplayHeader(
                scenario=ScenarioConfig(scenario_id=scenario, density=density, seed=seed),
                agent=config.agent,
                trial=trial,
                attempt=attempt,
                seed_base=config.seed_base,
                config_hash=provenance.config_hash,
                checkpoint_hash=checkpoint_hash,
            )
            path = log_path_for(logs, (config.agent, scenario, density, trial, attempt)) if logs else None
            record = run_episode(factory(), header.scenario, header, path)
            records.append(record)
            if Event.JAM_TIMEOUT.value not in record.events:
                break
        return records

    tasks = [(s, d, k) for s in config.scenarios for d in config.densities for k in range(config.trials)]
    with ThreadPoolExecutor(max_workers=workers or settings.eval_workers) as pool:
        results = list(pool.map(run_trial, tasks))

    report = summarize([r for chunk in results for r in chunk], provenance)
    for cell in report.cells:
        logger.info(
            "benchmark_cell_done",
            scenario=cell.scenario.value,
            density=cell.density.value,
            agent=cell.agent,
            success_rate=cell.success_rate,
            ct_mean=cell.ct_mean,
        )
    return report


def summarize(records: Iterable[EpisodeRecord], provenance: Provenance) -> BenchmarkReport:
    """Reduce episode attempts to per-cell metrics; independent of record order."""
    by_trial: dict[tuple[ScenarioId, Density, str, int], list[EpisodeRecord]] = defaultdict(list)
    for r in records:
        by_trial[(r.scenario, r.density, r.agent, r.trial)].append(r)

    cells_input: dict[tuple[ScenarioId, Density, str], list[tuple[EpisodeRecord, int]]] = defaultdict(list)
    for (scenario, density, agent, _), attempts in by_trial.items():
        attempts.sort(key=lambda r: r.attempt)
        cells_input[(scenario, density, agent)].append((attempts[-1], len(attempts) - 1))

    cells: list[BenchmarkCell] = []
    for key in sorted(cells_input, key=lambda k: (_SCENARIO_ORDER[k[0]], _DENSITY_ORDER[k[1]], k[2])):
        finals = sorted(cells_input[key], key=lambda item: item[0].trial)
        times = [r.steps * r.dt for r, _ in finals if Event.SUCCESS.value in r.events]
        trials = len(finals)
        cells.append(
            BenchmarkCell(
                scenario=key[0],
                density=key[1],
                agent=key[2],
                trials=trials,
                success_rate=100.0 * len(times) / trials,
                ct_mean=float(np.mean(times)) if times else None,
                ct_std=float(np.std(times)) if times else None,
                collisions=sum(Event.COLLISION.value in r.events for r, _ in finals),
                jam_recounts=sum(recounts for _, recounts in finals),
                jams=sum(Event.JAM_TIMEOUT.value in r.events for r, _ in finals),
                step_timeouts=sum(Event.STEP_TIMEOUT.value in r.events for r, _ in finals),
                seeds=sorted(r.seed for r, _ in finals),
            )
        )
    return BenchmarkReport(provenance=provenance, cells=cells, averages=average_cells(cells))


def average_cells(cells: list[BenchmarkCell]) -> list[BenchmarkAverage]:
    groups: dict[tuple[Density, str], list[BenchmarkCell]] = defaultdict(list)
    for c in cells:
        groups[(c.density, c.agent)].append(c)
    averages: list[BenchmarkAverage] = []
    for (density, agent) in sorted(groups, key=lambda k: (_DENSITY_ORDER[k[0]], k[1])):
        group = groups[(density, agent)]
        cts = [c.ct_mean for c in group if c.ct_mean is not None]
        averages.append(
            BenchmarkAverage(
                density=density,
                agent=agent,
                success_rate=float(np.mean([c.success_rate for c in group])),
                ct_mean=float(np.mean(cts)) if cts else None,
            )
        )
    return averages


def report_from_logs(log_dir: str | Path) -> BenchmarkReport:
    """Recompute a report purely from persisted replay logs."""
    paths = sorted(Path(log_dir).rglob(f"*{LOG_SUFFIX}"))
    if not paths:
        raise ConfigError(f"no replay logs under {log_dir}")
    records: list[EpisodeRecord] = []
    provenance: Provenance | None = None
    for path in paths:
        log = read_replay_log(path)
        h = log.header
        if h.seed_base is None:
            raise ConfigError(f"{path}: replay log was not written by a benchmark run")
        if provenance is None:
            provenance = Provenance(config_hash=h.config_hash, checkpoint_hash=h.checkpoint_hash, seed_base=h.seed_base)
        records.append(
            EpisodeRecord(
                scenario=h.scenario.scenario_id,
                density=h.scenario.density,
                agent=h.agent,
                trial=h.trial,
                attempt=h.attempt,
                seed=h.scenario.seed,
                events=log.final_events.names(),
                steps=len(log.steps),
                dt=h.dt,
            )
        )
    assert provenance is not None
    return summarize(records, provenance)


# ── Report files ─────────────────────────────────────────────────

def write_report(report: BenchmarkReport, path: str | Path) -> tuple[Path, Path]:
    """Line-delimited records at `path` plus a text table next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"kind": "provenance", **report.provenance.model_dump(mode="json")})]
    lines += [json.dumps({"kind": "cell", **c.model_dump(mode="json")}) for c in report.cells]
    lines += [json.dumps({"kind": "average", **a.model_dump(mode="json")}) for a in report.averages]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    table = path.with_suffix(".txt")
    table.write_text(format_report(report), encoding="utf-8")
    return path, table


def read_report(path: str | Path) -> BenchmarkReport:
    provenance: Provenance | None = None
    cells: list[BenchmarkCell] = []
    averages: list[BenchmarkAverage] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        kind = row.pop("kind")
        if kind == "provenance":
            provenance = Provenance.model_validate(row)
        elif kind == "cell":
            cells.append(BenchmarkCell.model_validate(row))
        elif kind == "average":
            averages.append(BenchmarkAverage.model_validate(row))
    if provenance is None:
        raise ConfigError(f"{path}: report has no provenance record")
    return BenchmarkReport(provenance=provenance, cells=cells, averages=averages)


def _fmt(cell: BenchmarkCell | BenchmarkAverage | None) -> str:
    if cell is None:
        return f"{'-':>15}"
    ct = "-" if cell.ct_mean is None else f"{cell.ct_mean:.1f}"
    return f"{cell.success_rate:6.1f}% {ct:>7}"


def format_report(report: BenchmarkReport) -> str:
    """Results table: one block per density, agents as rows, S.R. / C.T. per scenario."""
    scenarios = sorted({c.scenario for c in report.cells}, key=_SCENARIO_ORDER.__getitem__)
    densities = sorted({c.density for c in report.cells}, key=_DENSITY_ORDER.__getitem__)
    agents = sorted({c.agent for c in report.cells})
    index = {(c.scenario, c.density, c.agent): c for c in report.cells}
    averages = {(a.density, a.agent): a for a in report.averages}

    out = [f"config {report.provenance.config_hash[:12]}  seed_base {report.provenance.seed_base}"]
    if report.provenance.checkpoint_hash:
        out.append(f"checkpoint {report.provenance.checkpoint_hash[:12]}")
    for density in densities:
        out.append("")
        out.append(f"[{density.value}]  S.R. / C.T. (s)")
        out.append(f"{'agent':<16}" + "".join(f"{s.value:>16}" for s in scenarios) + f"{'average':>16}")
        for agent in agents:
            row = "".join(f" {_fmt(index.get((s, density, agent)))}" for s in scenarios)
            out.append(f"{agent:<16}{row} {_fmt(averages.get((density, agent)))}")
    return "\n".join(out) + "\n"
