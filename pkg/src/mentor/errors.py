class ConfigError(ValueError):
    """Invalid model, task or experiment configuration."""


class DataError(ValueError):
    """Dataset content violates a precondition (missing saliency, bad split, ...)."""


class MetricError(ValueError):
    """Metric is undefined for the given input."""
