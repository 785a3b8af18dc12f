"""Forecast next-year journal citations and CiteScore from annual bibliometric histories."""

__version__ = "0.1.0"

from .data_model import (  # noqa: E402
    AnnualRecord,
    Dataset,
    JournalHistory,
    SynthConfig,
    compute_citescore,
    generate_synthetic,
    load_ndjson,
    validate_history,
)
from .evaluation import MetricSet, compute_metrics, error_reduction  # noqa: E402

__all__ = [
    "__version__", "AnnualRecord", "Dataset", "JournalHistory", "SynthConfig",
    "compute_citescore", "generate_synthetic", "load_ndjson", "validate_history",
    "MetricSet", "compute_metrics", "error_reduction",
]
