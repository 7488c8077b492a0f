"""Typed errors; the CLI maps each family to a distinct exit code."""


class TrainerError(Exception):
    """Base for all trainer failures."""


class ConfigError(TrainerError):
    """Invalid configuration or request shape."""


class DatasetError(TrainerError):
    """Dataset missing, malformed, or statistically unusable for training."""


class MissingArtifactError(TrainerError):
    """A required model artifact does not exist."""
