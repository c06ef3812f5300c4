"""Shared exception types; the CLI maps them to exit codes."""


class SarcgenError(Exception):
    pass


class ConfigError(SarcgenError):
    """Invalid configuration value or unknown key. CLI exit code 2."""


class DataError(SarcgenError):
    """Malformed records, files or infeasible data requests. CLI exit code 3."""


class TrainingDiverged(SarcgenError):
    """Non-finite loss or score during training. CLI exit code 4."""
