"""Averaged-purity dynamics of random circuits with measurements, via symmetric-sector Lindbladians."""
from .lindblad import (Kind, LindbladOperator, ModelSpec, Preset, ResourceLimitError, TermSpec,
                       build_exact_subset, build_model, measure, measure_inter, unitary,
                       unitary_inter)
from .spin import INF

__version__ = "0.1.0"

__all__ = ["INF", "Kind", "LindbladOperator", "ModelSpec", "Preset", "ResourceLimitError",
           "TermSpec", "build_exact_subset", "build_model", "measure", "measure_inter",
           "unitary", "unitary_inter", "__version__"]
