"""Domain types shared across the package.

Volumes are held as numpy arrays of shape ``(nx, ny, nz)`` indexed
``[x, y, z]``. The flat, x-fastest ordering used on disk is Fortran order
of that array (see :meth:`VoxelGrid.flat` and :meth:`VoxelGrid.from_flat`).
All grids are immutable: the backing array is copied and marked read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class AspectsError(Exception):
    """Base class for all package errors."""


class DomainError(AspectsError, ValueError):
    """An argument lies outside the domain of an operation."""


class GeometryError(AspectsError, ValueError):
    """Two volumes do not share the same voxel lattice."""


class DegenerateMaskError(AspectsError, ValueError):
    """A mask has no boundary (all voxels set or all unset)."""


@dataclass(frozen=True)
class Spacing:
    """Voxel edge lengths in millimetres."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"spacing {name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def voxel_volume_mm3(self) -> float:
        return self.sx * self.sy * self.sz

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sx, self.sy, self.sz)


UNIT_SPACING = Spacing(1.0, 1.0, 1.0)


class Level(enum.Enum):
    BASAL_GANGLIA = "basal_ganglia"
    CORONA_RADIATA = "corona_radiata"


class Region(enum.Enum):
    """The ten scored MCA-territory regions, in label-table order."""

    Caudate = "Caudate"
    LentiformNucleus = "LentiformNucleus"
    InternalCapsule = "InternalCapsule"
    InsularCortex = "InsularCortex"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"

    @property
    def level(self) -> Level:
        if self in (Region.M4, Region.M5, Region.M6):
            return Level.CORONA_RADIATA
        return Level.BASAL_GANGLIA

    @property
    def index(self) -> int:
        return _REGION_ORDER.index(self)


_REGION_ORDER = tuple(Region)


class Hemisphere(enum.Enum):
    Left = "left"
    Right = "right"

    @property
    def other(self) -> Hemisphere:
        return Hemisphere.Right if self is Hemisphere.Left else Hemisphere.Left


class ClinicalBin(enum.Enum):
    """Treatment-outcome strata of the 0..10 score."""

    A = "A"
    B = "B"
    C = "C"

    @property
    def label(self) -> str:
        return {"A": "A (0-3)", "B": "B (4-7)", "C": "C (8-10)"}[self.value]


N_REGIONS = len(Region)
MAX_LABEL = 2 * N_REGIONS


def encode_label(hemisphere: Hemisphere, region: Region) -> int:
    """Label value for a (hemisphere, region) pair.

    1..10 are Left Caudate..Left M6 in :class:`Region` order, 11..20 the
    same regions on the right.
    """
    offset = 0 if hemisphere is Hemisphere.Left else N_REGIONS
    return offset + region.index + 1


def decode_label(label: int) -> tuple[Hemisphere, Region]:
    if isinstance(label, bool) or int(label) != label or not 1 <= label <= MAX_LABEL:
        raise DomainError(f"label must be an integer in 1..{MAX_LABEL}, got {label!r}")
    label = int(label)
    hemi = Hemisphere.Left if label <= N_REGIONS else Hemisphere.Right
    return hemi, _REGION_ORDER[(label - 1) % N_REGIONS]


def bin_score(score: int) -> ClinicalBin:
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= 10:
        raise DomainError(f"score must be an integer in 0..10, got {score!r}")
    if score <= 3:
        return ClinicalBin.A
    if score <= 7:
        return ClinicalBin.B
    return ClinicalBin.C


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense 3D array on a lattice with physical spacing."""

    data: np.ndarray
    spacing: Spacing = UNIT_SPACING

    def __post_init__(self):
        arr = np.array(self.data, copy=True)
        if arr.ndim != 3:
            raise DomainError(f"voxel data must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DomainError(f"every dimension must be >= 1, got {arr.shape}")
        if not isinstance(self.spacing, Spacing):
            object.__setattr__(self, "spacing", Spacing(*self.spacing))
        arr = self._coerce(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def _coerce(self, arr: np.ndarray) -> np.ndarray:
        return arr

    @classmethod
    def from_flat(cls, dims, flat, spacing=UNIT_SPACING, **kwargs):
        """Build from an x-fastest flat sequence of length nx*ny*nz."""
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise DomainError(f"dims must be three positive integers, got {dims}")
        flat = np.asarray(flat)
        if flat.ndim != 1 or flat.size != math.prod(dims):
            raise DomainError(
                f"data length {flat.size} does not match dims {dims} ({math.prod(dims)} voxels)"
            )
        return cls(flat.reshape(dims, order="F"), spacing, **kwargs)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def flat(self) -> np.ndarray:
        return self.data.ravel(order="F")

    def same_lattice(self, other: VoxelGrid) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


class BinaryMask(VoxelGrid):
    """Voxel grid of 0/1 values, stored as bool."""

    def _coerce(self, arr):
        if arr.dtype != bool:
            if not np.all((arr == 0) | (arr == 1)):
                raise DomainError("binary mask values must be 0 or 1")
            arr = arr.astype(bool)
        return arr

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def complement(self) -> BinaryMask:
        return BinaryMask(~self.data, self.spacing)


class AnatomyLabelMap(VoxelGrid):
    """Voxel grid of labels 0..20; see :func:`encode_label`."""

    def _coerce(self, arr):
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
                raise DomainError("anatomy labels must be integers")
        elif arr.dtype.kind not in "iub":
            raise DomainError(f"anatomy labels must be integers, got dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > MAX_LABEL):
            raise DomainError(f"anatomy labels must lie in 0..{MAX_LABEL}")
        return arr.astype(np.uint8)

    def region_mask(self, hemisphere: Hemisphere, region: Region) -> BinaryMask:
        return BinaryMask(self.data == encode_label(hemisphere, region), self.spacing)


class ProbabilityField(VoxelGrid):
    """Voxel grid of foreground probabilities in [0, 1], stored as float64."""

    def _coerce(self, arr):
        arr = arr.astype(np.float64)
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise DomainError("probabilities must lie in [0, 1]")
        return arr


def check_same_lattice(a: VoxelGrid, b: VoxelGrid, *, spacing: bool = True) -> None:
    if a.dims != b.dims:
        raise GeometryError(f"dims mismatch: {a.dims} vs {b.dims}")
    if spacing and a.spacing != b.spacing:
        raise GeometryError(f"spacing mismatch: {a.spacing.as_tuple()} vs {b.spacing.as_tuple()}")


@dataclass(frozen=True)
class HemisphereResult:
    score: int
    involved: frozenset
    overlap_voxels: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "involved", frozenset(self.involved))
        counts = {r: int(self.overlap_voxels.get(r, 0)) for r in Region}
        object.__setattr__(self, "overlap_voxels", counts)
        if self.score != N_REGIONS - len(self.involved):
            raise DomainError(
                f"score {self.score} inconsistent with {len(self.involved)} involved regions"
            )


@dataclass(frozen=True)
class AspectsReport:
    """Scoring outcome for one scan.

    ``policy`` is the involvement policy the report was computed with, kept
    as a plain mapping so that this module does not depend on scoring.
    """

    left: HemisphereResult
    right: HemisphereResult
    infarct_volume_ml: float
    policy: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.infarct_volume_ml >= 0):
            raise DomainError("infarct volume must be non-negative")

    def hemisphere(self, hemi: Hemisphere) -> HemisphereResult:
        return self.left if hemi is Hemisphere.Left else self.right

    @property
    def affected_hemisphere(self) -> Hemisphere:
        return Hemisphere.Right if self.right.score < self.left.score else Hemisphere.Left

    @property
    def score(self) -> int:
        return self.hemisphere(self.affected_hemisphere).score

    @property
    def bin(self) -> ClinicalBin:
        return bin_score(self.score)


@dataclass(frozen=True)
class ScorePair:
    scan_id: str
    score_a: int
    score_b: int

    def __post_init__(self):
        for name in ("score_a", "score_b"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or not 0 <= v <= 10:
                raise DomainError(f"{name} for scan {self.scan_id!r} must be in 0..10, got {v!r}")
            object.__setattr__(self, name, int(v))


class ScorePairTable(tuple):
    """Immutable sequence of :class:`ScorePair` with unique scan ids."""

    def __new__(cls, rows=()):
        rows = tuple(r if isinstance(r, ScorePair) else ScorePair(*r) for r in rows)
        seen = set()
        for r in rows:
            if r.scan_id in seen:
                raise DomainError(f"duplicate scan_id {r.scan_id!r}")
            seen.add(r.scan_id)
        return super().__new__(cls, rows)

    @classmethod
    def from_scores(cls, a, b, prefix="scan"):
        if len(a) != len(b):
            raise DomainError("score columns differ in length")
        width = max(3, len(str(len(a))))
        return cls(ScorePair(f"{prefix}_{i:0{width}d}", x, y) for i, (x, y) in enumerate(zip(a, b)))

    @property
    def a(self) -> np.ndarray:
        return np.array([r.score_a for r in self], dtype=np.int64)

    @property
    def b(self) -> np.ndarray:
        return np.array([r.score_b for r in self], dtype=np.int64)

    def swapped(self) -> ScorePairTable:
        return ScorePairTable(ScorePair(r.scan_id, r.score_b, r.score_a) for r in self)
