"""Exception types shared across the package."""


class TopicxferError(Exception):
    """Base class for all package errors."""


class CorpusError(TopicxferError):
    """Malformed corpus/vocabulary input (parse failures, empty vocabularies)."""


class ConfigError(TopicxferError):
    """Invalid configuration: bad hyperparameters, dimension mismatches, unknown keys."""


class NumericalError(TopicxferError):
    """Non-finite values encountered during training or inference."""
