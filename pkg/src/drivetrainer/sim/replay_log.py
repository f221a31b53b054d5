"""
Replay Log — line-delimited episode records.

Line 1 is a header (scenario config, agent, provenance); every following
line is one step with the ego action, reward, events and a vehicles list.
Floats are written in shortest round-trip form so metrics recomputed from
the log match the live run bit for bit.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from pathlib import Path
from types import TracebackType

import structlog
from pydantic import BaseModel, ValidationError

from drivetrainer.errors import ConfigError
from drivetrainer.sim.types import DT, EventFlags, ScenarioConfig, StepOutcome, VehicleState
from drivetrainer.sim.world import World, spawn_scenario

logger = structlog.get_logger(__name__)

LOG_FORMAT = "drivetrainer.replay.v1"


class VehicleRecord(BaseModel):
    vehicle_id: int
    x: float
    y: float
    psi: float
    v: float
    a: float
    w: float
    l: float  # noqa: E741
    route_id: str
    s: float

    @classmethod
    def from_state(cls, state: VehicleState) -> VehicleRecord:
        return cls(
            vehicle_id=state.vehicle_id, x=state.x, y=state.y, psi=state.psi, v=state.v, a=state.a,
            w=state.w, l=state.l, route_id=state.route_id, s=state.s,
        )

    def to_state(self) -> VehicleState:
        return VehicleState(
            self.vehicle_id, self.x, self.y, self.psi, self.v, self.a, self.w, self.l, self.route_id, self.s
        )


class ReplayHeader(BaseModel):
    format: str = LOG_FORMAT
    scenario: ScenarioConfig
    agent: str
    trial: int = 0
    attempt: int = 0
    seed_base: int | None = None
    config_hash: str = ""
    checkpoint_hash: str | None = None
    dt: float = DT


class StepRecord(BaseModel):
    t: int
    ego_action: int
    reward: float
    events: list[str]
    vehicles: list[VehicleRecord]

    @classmethod
    def from_outcome(cls, outcome: StepOutcome) -> StepRecord:
        return cls(
            t=outcome.t,
            ego_action=outcome.ego_action,
            reward=outcome.reward,
            events=outcome.events.names(),
            vehicles=[VehicleRecord.from_state(s) for s in outcome.states],
        )

    @property
    def flags(self) -> EventFlags:
        return EventFlags.from_names(self.events)

    @property
    def ego(self) -> VehicleRecord:
        return self.vehicles[0]


class ReplayLog(BaseModel):
    header: ReplayHeader
    steps: list[StepRecord]

    @property
    def final_events(self) -> EventFlags:
        return self.steps[-1].flags if self.steps else EventFlags()


class ReplayLogWriter:
    """Context manager appending one JSON line per step."""

    def __init__(self, path: Path, header: ReplayHeader) -> None:
        self.path = path
        self.header = header
        self._handle = None

    def __enter__(self) -> ReplayLogWriter:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w", encoding="utf-8")
        self._handle.write(self.header.model_dump_json() + "\n")
        return self

    def write(self, outcome: StepOutcome) -> StepRecord:
        record = StepRecord.from_outcome(outcome)
        assert self._handle is not None, "writer used outside its context"
        self._handle.write(record.model_dump_json() + "\n")
        return record

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def write_replay_log(path: Path, header: ReplayHeader, records: Iterable[StepRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(header.model_dump_json() + "\n")
        for record in records:
            fh.write(record.model_dump_json() + "\n")


def _lines(path: Path) -> Iterator[str]:
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield line


def read_replay_log(path: Path) -> ReplayLog:
    """Parse a log file; malformed content raises ConfigError naming the line."""
    lines = _lines(path)
    try:
        first = next(lines)
    except StopIteration:
        raise ConfigError(f"{path}: empty replay log") from None
    try:
        header = ReplayHeader.model_validate_json(first)
    except ValidationError as exc:
        raise ConfigError(f"{path}:1: invalid replay header: {exc.error_count()} error(s)") from exc
    if header.format != LOG_FORMAT:
        raise ConfigError(f"{path}: unsupported replay format {header.format!r}")

    steps: list[StepRecord] = []
    for lineno, line in enumerate(lines, start=2):
        try:
            steps.append(StepRecord.model_validate_json(line))
        except ValidationError as exc:
            raise ConfigError(f"{path}:{lineno}: invalid step record") from exc
    logger.debug("replay_log_read", path=str(path), steps=len(steps))
    return ReplayLog(header=header, steps=steps)


def world_from_record(header: ReplayHeader, record: StepRecord) -> World:
    """World snapshot at a logged step: the scenario's map with the logged vehicles."""
    base = spawn_scenario(header.scenario)
    world = base.with_states([v.to_state() for v in record.vehicles])
    world.t = record.t
    return world
