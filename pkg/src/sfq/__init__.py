"""Security Friction Quotient: metric, simulator and sensitivity analyses."""
from .metric import (
    NormalizationBounds,
    NormalizedComponents,
    RawComponents,
    ScenarioSet,
    ValidationError,
    WeightVector,
    compute_sfq,
    normalize,
    normalize_component,
    risk_index,
)

__version__ = "0.1.0"

__all__ = [
    "NormalizationBounds",
    "NormalizedComponents",
    "RawComponents",
    "ScenarioSet",
    "ValidationError",
    "WeightVector",
    "compute_sfq",
    "normalize",
    "normalize_component",
    "risk_index",
    "__version__",
]
