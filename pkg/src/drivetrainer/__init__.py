"""Graph-attention deep Q-learning for interactive driving, at desk scale."""

__version__ = "0.1.0"
