"""Saliency-pretrained anomaly classifiers on a small numpy autodiff engine."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, MetricError  # noqa: E402,F401
