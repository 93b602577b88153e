class SeqInferError(Exception):
    """Base class for runtime and numeric failures."""


class DegenerateSampleError(SeqInferError):
    pass


class ConfigError(SeqInferError, ValueError):
    """Invalid experiment configuration or CLI arguments."""
