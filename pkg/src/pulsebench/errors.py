"""Exception types shared across the toolkit."""


class PulseBenchError(Exception):
    """Base class for all toolkit errors."""


class FormatError(PulseBenchError, ValueError):
    """A file does not follow the expected on-disk layout."""


class UnsupportedLayoutError(FormatError):
    """A well-formed file uses a layout this toolkit does not read."""


class DimensionError(PulseBenchError, ValueError):
    """Array or sequence lengths disagree."""


class VacuousCaseError(PulseBenchError, ValueError):
    """An ablation leaves nothing to impute or evaluate."""


class InsufficientDataError(PulseBenchError, ValueError):
    """Not enough observed samples to do the requested work."""


class ConfigError(PulseBenchError, ValueError):
    """Invalid or inconsistent configuration."""


class ParameterError(PulseBenchError, ValueError):
    """An argument is outside its valid range."""


class TooFewBeatsError(PulseBenchError, ValueError):
    """Beat segmentation found fewer pulses than required."""


class FlatTemplateError(PulseBenchError, ValueError):
    """Ensemble averaging produced a zero-variance template."""


class TrainingDivergedError(PulseBenchError, RuntimeError):
    """Training loss exceeded the divergence bound."""
