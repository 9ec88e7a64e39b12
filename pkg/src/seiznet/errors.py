"""Exception types shared across the package."""


class SeizNetError(Exception):
    """Base class for errors raised by this package."""


class DataError(SeizNetError):
    """Malformed input signals, manifests, or record stores."""


class SplitError(SeizNetError):
    """Patient split cannot be constructed as requested."""


class ModelIOError(SeizNetError):
    """Weight files that cannot be read back."""


class TrainingDivergedError(SeizNetError):
    """Non-finite loss or gradient encountered during training."""


class AggregationError(SeizNetError):
    """Decision aggregation or grid search cannot produce a result."""
