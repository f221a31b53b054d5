"""
Service Schemas — The external contract of the benchmark and inspection tools.

Defines the records written to report files and printed by the CLI.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from drivetrainer.config import config_hash
from drivetrainer.sim.types import Density, ScenarioId


# ── Benchmark Setup ──────────────────────────────────────────────

class BenchmarkConfig(BaseModel):
    """Everything that determines a benchmark run; hashed into its provenance."""
    agent: str
    scenarios: list[ScenarioId]
    densities: list[Density]
    trials: int = Field(100, gt=0)
    seed_base: int
    max_recounts: int = Field(3, ge=0)

    def config_hash(self) -> str:
        return config_hash(self)


class EpisodeRecord(BaseModel):
    """Outcome of one episode attempt; the only input metrics are computed from."""
    scenario: ScenarioId
    density: Density
    agent: str
    trial: int
    attempt: int
    seed: int
    events: list[str]
    steps: int
    dt: float


# ── Benchmark Results ────────────────────────────────────────────

class BenchmarkCell(BaseModel):
    """One (scenario, density, agent) entry of the results table."""
    scenario: ScenarioId
    density: Density
    agent: str
    trials: int
    success_rate: float
    ct_mean: float | None = None
    ct_std: float | None = None
    collisions: int = 0
    jam_recounts: int = 0
    jams: int = 0
    step_timeouts: int = 0
    seeds: list[int] = Field(default_factory=list)


class BenchmarkAverage(BaseModel):
    """Mean over scenarios for one (density, agent)."""
    density: Density
    agent: str
    success_rate: float
    ct_mean: float | None = None


class Provenance(BaseModel):
    config_hash: str
    checkpoint_hash: str | None = None
    seed_base: int


class BenchmarkReport(BaseModel):
    provenance: Provenance
    cells: list[BenchmarkCell]
    averages: list[BenchmarkAverage] = Field(default_factory=list)

    def cell(self, scenario: ScenarioId, density: Density, agent: str) -> BenchmarkCell:
        for c in self.cells:
            if (c.scenario, c.density, c.agent) == (scenario, density, agent):
                return c
        raise KeyError((scenario, density, agent))


# ── Introspection ────────────────────────────────────────────────

class AttentionHead(BaseModel):
    """Ego-row attention of one head; `weights` align with `node_ids`."""
    layer: int
    head: int
    node_ids: list[int]
    weights: list[float]


class AttentionReport(BaseModel):
    q_values: list[float]
    action: int
    heads: list[AttentionHead] = Field(default_factory=list)
