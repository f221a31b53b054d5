"""
Error Hierarchy — Every failure the package raises on purpose.

• Root: DrivetrainerError (the CLI maps it to exit code 1)
• Numeric: DimensionError, DomainError, InvalidMaskError
• Simulation: TerminalWorldError, SpawnError
• Learning: BufferUnderflowError, TrainingDivergedError, WorkerFailureError
• Surface: ConfigError, CheckpointError, UnknownAgentError, UnknownNetworkKindError
"""

from __future__ import annotations


class DrivetrainerError(Exception):
    """Base class for all package errors."""


# ── Numeric ──────────────────────────────────────────────────────

class DimensionError(DrivetrainerError):
    """Operand shapes do not agree."""

    def __init__(self, op: str, *shapes: tuple[int, ...], detail: str = "") -> None:
        self.op = op
        self.shapes = shapes
        listed = " vs ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {listed}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class DomainError(DrivetrainerError):
    """Input outside the mathematical domain of an operation."""


class InvalidMaskError(DrivetrainerError):
    """A softmax row has no unmasked entry."""


# ── Simulation ───────────────────────────────────────────────────

class TerminalWorldError(DrivetrainerError):
    """The world already reached a terminal event."""


class SpawnError(DrivetrainerError):
    """Vehicle placement could not be resolved without overlaps."""


# ── Learning ─────────────────────────────────────────────────────

class BufferUnderflowError(DrivetrainerError):
    """Asked for more samples than the replay buffer holds."""


class TrainingDivergedError(DrivetrainerError):
    """The TD loss became non-finite."""

    def __init__(self, diagnostic: dict[str, object]) -> None:
        self.diagnostic = diagnostic
        details = ", ".join(f"{k}={v}" for k, v in diagnostic.items())
        super().__init__(f"training diverged: {details}")


class WorkerFailureError(DrivetrainerError):
    """Every experience worker exhausted its restarts."""


# ── Surface ──────────────────────────────────────────────────────

class ConfigError(DrivetrainerError):
    """A configuration file or value failed validation."""


class CheckpointError(DrivetrainerError):
    """A checkpoint file is missing entries or does not match the network."""


class UnknownAgentError(DrivetrainerError):
    """The agent name is not in the registry."""


class UnknownNetworkKindError(DrivetrainerError):
    """The network kind is not one of the supported architectures."""
