"""Electro-thermal solver and layout optimizer for TSV arrays.

Analytical RLCG extraction, broadband multiport S-parameters, homogenized
anisotropic thermal modeling, and symmetry-reduced multi-objective search
over signal/ground assignments on a uniform pitch grid.
"""

from tsvnet.core import (
    D4,
    FrequencyGrid,
    GeometryMaterials,
    TsvLayout,
    apply_d4,
    build_layout,
    canonical_form,
    pairwise_distances,
)

__all__ = [
    "D4",
    "FrequencyGrid",
    "GeometryMaterials",
    "TsvLayout",
    "apply_d4",
    "build_layout",
    "canonical_form",
    "pairwise_distances",
]

__version__ = "0.1.0"
