"""Forward-only nowcasting kernels, radar preprocessing and forecast verification."""

from .errors import (
    ConfigError, DegenerateInputError, DimensionError, DomainError, FormatError, RadarcastError, ScheduleError,
    ValidationError,
)
from .swin import ModelConfig, WeightStore, init_weights, load_weights, model_forward, preset, save_weights
from .verify import ContingencyTable, MetricReport, ThresholdSet, evaluate

__version__ = "0.1.0"
