"""ASPECTS scoring from infarct and anatomy masks, with evaluation metrics
and a reference composite segmentation loss."""

from .core import (
    AnatomyLabelMap,
    AspectsError,
    AspectsReport,
    BinaryMask,
    ClinicalBin,
    DegenerateMaskError,
    DomainError,
    GeometryError,
    Hemisphere,
    HemisphereResult,
    ProbabilityField,
    Region,
    ScorePair,
    ScorePairTable,
    Spacing,
    VoxelGrid,
    bin_score,
    decode_label,
    encode_label,
)
from .scoring import InvolvementPolicy, infarct_volume_ml, overlap_counts, score

__version__ = "0.1.0"

__all__ = [
    "AnatomyLabelMap",
    "AspectsError",
    "AspectsReport",
    "BinaryMask",
    "ClinicalBin",
    "DegenerateMaskError",
    "DomainError",
    "GeometryError",
    "Hemisphere",
    "HemisphereResult",
    "InvolvementPolicy",
    "ProbabilityField",
    "Region",
    "ScorePair",
    "ScorePairTable",
    "Spacing",
    "VoxelGrid",
    "bin_score",
    "decode_label",
    "encode_label",
    "infarct_volume_ml",
    "overlap_counts",
    "score",
]
