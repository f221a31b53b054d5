"""Neural layers, the graph-attention Q-network and its ablations."""

from drivetrainer.nn.types import Mode, NetworkConfig, NetworkKind, QOutput

__all__ = ["Mode", "NetworkConfig", "NetworkKind", "QOutput"]
