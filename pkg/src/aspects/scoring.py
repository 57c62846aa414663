"""Overlay an infarct mask on an anatomy label map and score it.

Each hemisphere starts at 10 and loses one point per region the infarct
involves. Whether an overlap counts as involvement is decided by an
:class:`InvolvementPolicy`, since a handful of stray voxels should not cost
a point.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import (
    MAX_LABEL,
    N_REGIONS,
    AnatomyLabelMap,
    AspectsReport,
    BinaryMask,
    DomainError,
    Hemisphere,
    HemisphereResult,
    Region,
    check_same_lattice,
    decode_label,
    encode_label,
)

VOLUME_BUCKETS = ("<3ml", "3-16ml", "16-66ml", ">66ml")
_BUCKET_EDGES = (3.0, 16.0, 66.0)


@dataclass(frozen=True)
class InvolvementPolicy:
    """A region is involved iff its overlap reaches ``min_overlap_voxels``
    or covers at least ``min_overlap_fraction`` of the region.

    Empty regions are never involved.
    """

    min_overlap_voxels: int = 10
    min_overlap_fraction: float = 0.01

    def __post_init__(self):
        v = self.min_overlap_voxels
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise DomainError(f"min_overlap_voxels must be a positive integer, got {v!r}")
        if not 0.0 <= self.min_overlap_fraction <= 1.0:
            raise DomainError(f"min_overlap_fraction must lie in [0, 1], got {self.min_overlap_fraction!r}")
        object.__setattr__(self, "min_overlap_voxels", int(v))
        object.__setattr__(self, "min_overlap_fraction", float(self.min_overlap_fraction))

    def involved(self, overlap: int, region_size: int) -> bool:
        if region_size < 1 or overlap < 1:
            return False
        return overlap >= self.min_overlap_voxels or overlap >= self.min_overlap_fraction * region_size

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> InvolvementPolicy:
        unknown = set(doc) - {"min_overlap_voxels", "min_overlap_fraction"}
        if unknown:
            raise DomainError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**doc)


DEFAULT_POLICY = InvolvementPolicy()


def _label_counts(labels: np.ndarray) -> np.ndarray:
    return np.bincount(labels.ravel(), minlength=MAX_LABEL + 1)


def overlap_counts(infarct: BinaryMask, anatomy: AnatomyLabelMap) -> dict[tuple[Hemisphere, Region], int]:
    """Infarct voxel count per labelled (hemisphere, region); zero counts omitted."""
    check_same_lattice(infarct, anatomy)
    counts = _label_counts(anatomy.data[infarct.data])
    return {decode_label(lab): int(counts[lab]) for lab in range(1, MAX_LABEL + 1) if counts[lab]}


def region_sizes(anatomy: AnatomyLabelMap) -> dict[tuple[Hemisphere, Region], int]:
    counts = _label_counts(anatomy.data)
    return {decode_label(lab): int(counts[lab]) for lab in range(1, MAX_LABEL + 1)}


def infarct_volume_ml(infarct: BinaryMask) -> float:
    """Set-voxel count times voxel volume, converted from mm^3 to ml."""
    return infarct.count * infarct.spacing.voxel_volume_mm3 / 1000.0


def classify_volume_bucket(volume_ml: float) -> str:
    """Bucket a lesion volume; intervals are closed on the left."""
    if not volume_ml >= 0:
        raise DomainError(f"volume must be non-negative, got {volume_ml!r}")
    for name, edge in zip(VOLUME_BUCKETS, _BUCKET_EDGES):
        if volume_ml < edge:
            return name
    return VOLUME_BUCKETS[-1]


def hemisphere_result(overlaps: dict, sizes: dict, hemi: Hemisphere, policy: InvolvementPolicy) -> HemisphereResult:
    overlap = {r: int(overlaps.get((hemi, r), 0)) for r in Region}
    involved = frozenset(r for r in Region if policy.involved(overlap[r], sizes.get((hemi, r), 0)))
    return HemisphereResult(score=N_REGIONS - len(involved), involved=involved, overlap_voxels=overlap)


def score(
    infarct: BinaryMask,
    anatomy: AnatomyLabelMap,
    policy: InvolvementPolicy = DEFAULT_POLICY,
) -> AspectsReport:
    """Run the full scoring function on one scan."""
    check_same_lattice(infarct, anatomy)
    overlaps = overlap_counts(infarct, anatomy)
    sizes = region_sizes(anatomy)
    return AspectsReport(
        left=hemisphere_result(overlaps, sizes, Hemisphere.Left, policy),
        right=hemisphere_result(overlaps, sizes, Hemisphere.Right, policy),
        infarct_volume_ml=infarct_volume_ml(infarct),
        policy=policy.as_dict(),
    )


def mirror_labels(anatomy: AnatomyLabelMap) -> AnatomyLabelMap:
    """Flip the x axis and swap left/right labels."""
    lut = np.zeros(MAX_LABEL + 1, dtype=np.uint8)
    for lab in range(1, MAX_LABEL + 1):
        hemi, region = decode_label(lab)
        lut[lab] = encode_label(hemi.other, region)
    return AnatomyLabelMap(lut[anatomy.data[::-1]], anatomy.spacing)
