"""Zero-shot image diagnosis from LLM-generated symptom descriptors."""

from .scoring import (
    AggregationMode,
    Embedding,
    ScoreReport,
    class_score,
    classify,
    dot,
    l2_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationMode",
    "Embedding",
    "ScoreReport",
    "class_score",
    "classify",
    "dot",
    "l2_normalize",
    "__version__",
]
