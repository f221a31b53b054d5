import argparse
import json

import pytest
import yaml

from drivetrainer.nn.checkpoint import save_checkpoint
from drivetrainer.nn.qnet import QNetworkParams
from drivetrainer.service.benchmark import read_report
from drivetrainer.service.cli import main, parse_densities, parse_scenarios
from drivetrainer.sim.replay_log import ReplayHeader, StepRecord, write_replay_log
from drivetrainer.sim.types import Density, ScenarioConfig, ScenarioId
from drivetrainer.sim.world import spawn_scenario


@pytest.fixture
def logged_episode(tmp_path):
    """Four logged steps of an intersection crossing."""
    config = ScenarioConfig(scenario_id=ScenarioId.INT_CROSS, seed=8)
    world = spawn_scenario(config)
    steps = [StepRecord.from_outcome(world.step(1)) for _ in range(4)]
    path = tmp_path / "episode.replay.jsonl"
    write_replay_log(path, ReplayHeader(scenario=config, agent="constant:10"), steps)
    return path


@pytest.fixture
def checkpoint(tmp_path, tiny_network_config, tiny_obs_config):
    return save_checkpoint(
        tmp_path / "ckpt.npz",
        QNetworkParams.create(tiny_network_config),
        0,
        {"observation": tiny_obs_config.model_dump(mode="json")},
    )


def test_scenario_and_density_parsing():
    """Set names expand; comma lists parse; bad names are argparse errors."""
    assert parse_scenarios("toy") == [ScenarioId.STOPPED_LEAD]
    assert parse_scenarios("new") == [ScenarioId.FIVE_WAY, ScenarioId.ROUNDABOUT]
    assert parse_scenarios("t_merge, int_left") == [ScenarioId.T_MERGE, ScenarioId.INT_LEFT]
    assert parse_densities("both") == [Density.REGULAR, Density.DENSE]
    with pytest.raises(argparse.ArgumentTypeError, match="unknown scenario"):
        parse_scenarios("highway")


def test_unknown_flag_prints_usage(capsys):
    """argparse errors exit non-zero with usage text."""
    assert main(["eval", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_eval_writes_report(tmp_path, capsys):
    """eval on fsm_ttc writes a record file with the requested trial count."""
    report_path = tmp_path / "report.jsonl"
    code = main(
        ["eval", "--agent", "fsm_ttc", "--scenarios", "t_merge", "--density", "regular", "--trials", "10",
         "--report", str(report_path)]
    )
    assert code == 0
    cell = read_report(report_path).cell(ScenarioId.T_MERGE, Density.REGULAR, "fsm_ttc")
    assert cell.trials == 10 and len(cell.seeds) == 10
    assert report_path.with_suffix(".txt").exists()
    assert "t_merge" in capsys.readouterr().out


def test_eval_rejects_training_seeds(tmp_path, capsys):
    """A seed base inside the training range fails with a diagnostic."""
    code = main(["eval", "--agent", "random", "--scenarios", "toy", "--density", "regular", "--trials", "1",
                 "--seed-base", "7", "--report", str(tmp_path / "r.jsonl")])
    assert code == 1
    assert "training seed range" in capsys.readouterr().err


def test_train_is_reproducible(tmp_path, tiny_network_config, tiny_obs_config):
    """Two single-worker runs with --seed 7 write identical training logs."""
    config = {
        "network": tiny_network_config.model_dump(mode="json"),
        "observation": tiny_obs_config.model_dump(mode="json"),
        "scenarios": ["stopped_lead"],
        "densities": ["regular"],
        "batch_size": 8,
        "rounds_per_update": 2,
        "collect_interval": 20,
        "buffer_capacity": 500,
    }
    config_path = tmp_path / "tiny.yaml"
    config_path.write_text(yaml.safe_dump(config), encoding="utf-8")

    logs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--config", str(config_path), "--workers", "1", "--seed", "7", "--steps", "40",
                     "--out", str(out)]) == 0
        logs.append((out / "training_log.jsonl").read_text(encoding="utf-8"))
        assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["step_000000040.npz"]
    assert logs[0] == logs[1]
    assert [json.loads(line)["env_steps"] for line in logs[0].splitlines()] == [20, 40]


def test_train_bad_config(tmp_path):
    """An invalid YAML config is reported, not raised."""
    config_path = tmp_path / "bad.yaml"
    config_path.write_text("per_beta_start: 0.9\nper_beta_end: 0.1\n", encoding="utf-8")
    assert main(["train", "--config", str(config_path)]) == 1


def test_replay_renders_frames(tmp_path, logged_episode, checkpoint):
    """replay writes one PNG per logged step, with or without saliency."""
    assert main(["replay", "--log", str(logged_episode), "--out-dir", str(tmp_path / "plain")]) == 0
    assert len(list((tmp_path / "plain").glob("frame_*.png"))) == 4
    assert main(["replay", "--log", str(logged_episode), "--out-dir", str(tmp_path / "sal"),
                 "--saliency", str(checkpoint)]) == 0
    assert len(list((tmp_path / "sal").glob("frame_*.png"))) == 4


def test_inspect_writes_artifacts(tmp_path, logged_episode, checkpoint, capsys):
    """inspect emits attention JSON and a saliency image for the chosen step."""
    out = tmp_path / "inspect"
    assert main(["inspect", "--checkpoint", str(checkpoint), "--obs-from-log", str(logged_episode),
                 "--step", "2", "--out", str(out)]) == 0
    attention = json.loads((out / "attention.json").read_text(encoding="utf-8"))
    assert len(attention["q_values"]) == 5 and attention["heads"]
    assert (out / "saliency.png").exists()
    assert "q_values" in capsys.readouterr().out


def test_inspect_step_out_of_range(tmp_path, logged_episode, checkpoint):
    """Asking for a step the log does not have exits with status 1."""
    assert main(["inspect", "--checkpoint", str(checkpoint), "--obs-from-log", str(logged_episode),
                 "--step", "9", "--out", str(tmp_path / "x")]) == 1


def test_missing_log_is_reported(tmp_path):
    """A missing replay log is an IO error with exit status 1."""
    assert main(["replay", "--log", str(tmp_path / "nope.jsonl"), "--out-dir", str(tmp_path / "o")]) == 1
