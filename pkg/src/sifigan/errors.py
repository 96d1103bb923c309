"""Exception taxonomy for the engine.

Every failure surfaced to callers is one of these; bare ValueError/KeyError
escaping the package is a bug.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid model configuration or tensor/shape mismatch."""


class CheckpointError(EngineError):
    """Malformed, truncated, or inconsistent weight file."""


class FeatureError(EngineError):
    """Broken feature bundle or audio file."""


class MetricError(EngineError):
    """Metric preconditions violated (length, rate, emptiness)."""
