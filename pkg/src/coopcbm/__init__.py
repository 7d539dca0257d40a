"""Cost-aware interactive concept intervention engine."""

__version__ = "0.1.0"
