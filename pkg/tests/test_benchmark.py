import random
from pathlib import Path

import pytest

from drivetrainer.agents.reference import ConstantSpeedAgent
from drivetrainer.config import TRAIN_SEED_LIMIT, load_yaml_config
from drivetrainer.errors import ConfigError
from drivetrainer.rl.trainer import AsyncTrainer
from drivetrainer.rl.types import TrainerConfig
from drivetrainer.service.benchmark import (
    format_report,
    read_report,
    report_from_logs,
    run_benchmark,
    run_episode,
    summarize,
    trial_seed,
    write_report,
)
from drivetrainer.service.schema import BenchmarkConfig, EpisodeRecord, Provenance
from drivetrainer.sim.replay_log import ReplayHeader
from drivetrainer.sim.types import Density, ScenarioConfig, ScenarioId

SEED_BASE = TRAIN_SEED_LIMIT


def record(trial, attempt, events, steps, scenario=ScenarioId.T_MERGE, agent="fsm_ttc"):
    return EpisodeRecord(
        scenario=scenario,
        density=Density.REGULAR,
        agent=agent,
        trial=trial,
        attempt=attempt,
        seed=trial_seed(SEED_BASE, 10, trial, attempt),
        events=events,
        steps=steps,
        dt=0.1,
    )


def test_trial_seeds_are_disjoint_blocks():
    """Recounts move a whole block of trials further, so no seed repeats."""
    seeds = {trial_seed(SEED_BASE, 10, t, a) for t in range(10) for a in range(4)}
    assert len(seeds) == 40 and min(seeds) == SEED_BASE


def test_summarize_metrics():
    """S.R. counts final attempts; C.T. averages successful trials only."""
    records = [
        record(0, 0, ["jam_timeout"], 150),
        record(0, 1, ["success"], 100),
        record(1, 0, ["collision"], 42),
        record(2, 0, ["success"], 140),
        record(3, 0, ["step_timeout"], 600),
    ]
    provenance = Provenance(config_hash="abc", seed_base=SEED_BASE)
    cell = summarize(records, provenance).cell(ScenarioId.T_MERGE, Density.REGULAR, "fsm_ttc")
    assert cell.trials == 4
    assert cell.success_rate == 50.0
    assert cell.ct_mean == pytest.approx(12.0) and cell.ct_std == pytest.approx(2.0)
    assert (cell.collisions, cell.jam_recounts, cell.jams, cell.step_timeouts) == (1, 1, 0, 1)
    assert cell.seeds == sorted([trial_seed(SEED_BASE, 10, 0, 1)] + [trial_seed(SEED_BASE, 10, t, 0) for t in (1, 2, 3)])

    shuffled = records[:]
    random.Random(3).shuffle(shuffled)
    assert summarize(shuffled, provenance) == summarize(records, provenance), "Record order must not matter."


def test_averages_skip_undefined_completion_times():
    """Scenario averages of C.T. ignore cells without any success."""
    records = [
        record(0, 0, ["success"], 100, scenario=ScenarioId.T_MERGE),
        record(0, 0, ["collision"], 30, scenario=ScenarioId.T_LEFT),
    ]
    report = summarize(records, Provenance(config_hash="abc", seed_base=SEED_BASE))
    (average,) = report.averages
    assert average.success_rate == 50.0 and average.ct_mean == pytest.approx(10.0)


def test_eval_seeds_must_avoid_training_range():
    """A seed base inside the training range is a ConfigError."""
    config = BenchmarkConfig(
        agent="random", scenarios=[ScenarioId.T_MERGE], densities=[Density.REGULAR], trials=1, seed_base=5
    )
    with pytest.raises(ConfigError):
        run_benchmark(config)


def test_cruise_agent_succeeds_without_traffic():
    """On an empty map a 30 km/h cruise reaches the goal."""
    scenario = ScenarioConfig(scenario_id=ScenarioId.T_LEFT, vehicle_count=(0, 0), seed=SEED_BASE)
    header = ReplayHeader(scenario=scenario, agent="constant:30")
    result = run_episode(ConstantSpeedAgent(30.0), scenario, header)
    assert result.events == ["success"]
    assert 0 < result.steps < scenario.max_steps


def test_standing_agent_never_succeeds():
    """constant:0 fails every trial and leaves C.T. undefined."""
    config = BenchmarkConfig(
        agent="constant:0",
        scenarios=[ScenarioId.T_MERGE],
        densities=[Density.REGULAR],
        trials=2,
        seed_base=SEED_BASE,
        max_recounts=1,
    )
    cell = run_benchmark(config, workers=2).cells[0]
    assert cell.trials == 2 and cell.success_rate == 0.0
    assert cell.ct_mean is None and cell.ct_std is None


def test_report_from_logs_matches_live_report(tmp_path):
    """Rebuilding the report from replay logs reproduces every field."""
    config = BenchmarkConfig(
        agent="fsm_ttc",
        scenarios=[ScenarioId.T_MERGE, ScenarioId.T_LEFT],
        densities=[Density.REGULAR],
        trials=2,
        seed_base=SEED_BASE + 100,
        max_recounts=1,
    )
    live = run_benchmark(config, log_dir=tmp_path / "logs", workers=2)
    assert live.provenance.config_hash == config.config_hash()
    assert report_from_logs(tmp_path / "logs") == live


def test_report_from_logs_needs_logs(tmp_path):
    """An empty log directory is a ConfigError."""
    with pytest.raises(ConfigError):
        report_from_logs(tmp_path)


def test_report_files(tmp_path):
    """The records file reads back to the same report and the table lists averages."""
    records = [record(0, 0, ["success"], 100), record(1, 0, ["collision"], 20)]
    report = summarize(records, Provenance(config_hash="f" * 64, checkpoint_hash="c" * 64, seed_base=SEED_BASE))
    path, table = write_report(report, tmp_path / "out" / "report.jsonl")
    assert read_report(path) == report
    text = table.read_text(encoding="utf-8")
    assert text == format_report(report)
    assert "[regular]" in text and "average" in text and "fsm_ttc" in text and "50.0%" in text


def test_report_without_provenance(tmp_path):
    """A records file missing its provenance line is rejected."""
    path = tmp_path / "report.jsonl"
    path.write_text("\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_report(path)


# ── Long runs (pytest -m slow) ───────────────────────────────────

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.slow
def test_fsm_ttc_beats_random_on_shared_seeds():
    """On the same merge seeds the rule-based baseline succeeds more often than random actions."""
    rates = {}
    for agent in ("fsm_ttc", "random"):
        config = BenchmarkConfig(
            agent=agent, scenarios=[ScenarioId.T_MERGE], densities=[Density.REGULAR], trials=20, seed_base=SEED_BASE
        )
        rates[agent] = run_benchmark(config).cells[0].success_rate
    assert rates["fsm_ttc"] > rates["random"], f"Baseline ordering broken: {rates}"


@pytest.mark.slow
def test_toy_training_reaches_target_success(tmp_path):
    """150k steps on the stopped-lead road give at least 90% success over 100 evaluation episodes."""
    trainer_config = load_yaml_config(CONFIG_DIR / "toy_stopped_lead.yaml", TrainerConfig)
    summary = AsyncTrainer(trainer_config, tmp_path / "train").run()
    config = BenchmarkConfig(
        agent="dqgat", scenarios=[ScenarioId.STOPPED_LEAD], densities=[Density.REGULAR], trials=100, seed_base=SEED_BASE
    )
    cell = run_benchmark(config, checkpoint=summary.checkpoints[-1]).cells[0]
    assert cell.success_rate >= 90.0, f"Only {cell.success_rate:.1f}% success after {summary.env_steps} steps"
