"""Synthetic anatomy, infarct and score-table generators with known answers.

Randomness comes from SplitMix64 only, so phantoms can be reproduced in any
language:

* ``SplitMix64(seed).next()`` is the reference sequential generator
  (state += 0x9E3779B97F4A7C15, then the standard mixing finaliser).
* ``mix64(x)`` is that finaliser applied to ``x + 0x9E3779B97F4A7C15`` and is
  used as a keyed hash to order voxels: the voxels picked from a region are
  the ones with the smallest ``mix64(key ^ flat_index)``, ties broken by index.

Anatomy layout: each hemisphere occupies half the x range (left is
``x < nx // 2``, right is its mirror image). The lower half of z hosts the
seven basal-ganglia regions stacked along y, the upper half hosts M4-M6.
Each region is a box jittered inside its cell; the right hemisphere is an
exact mirror of the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    UNIT_SPACING,
    AnatomyLabelMap,
    AspectsReport,
    BinaryMask,
    DomainError,
    Hemisphere,
    HemisphereResult,
    Level,
    Region,
    ScorePair,
    ScorePairTable,
    Spacing,
    encode_label,
)
from .scoring import DEFAULT_POLICY, InvolvementPolicy

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

DEFAULT_DIMS = (64, 64, 32)
MIN_DIMS = (2, 7, 2)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _M1) & MASK64
        z = ((z ^ (z >> 27)) * _M2) & MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)`` by rejection sampling (unbiased)."""
        if bound < 1:
            raise ValueError("bound must be >= 1")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound

    def uniform(self) -> float:
        """Float in ``[0, 1)`` from the top 53 bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))


def mix64(x: np.ndarray) -> np.ndarray:
    """Vectorised SplitMix64 output function of ``x`` (uint64, wrapping)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    dims: tuple = DEFAULT_DIMS
    spacing: Spacing = UNIT_SPACING
    lesion_plan: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not isinstance(self.spacing, Spacing):
            object.__setattr__(self, "spacing", Spacing(*self.spacing))
        plan = []
        seen = set()
        for entry in self.lesion_plan:
            hemi, region, frac = entry
            hemi = hemi if isinstance(hemi, Hemisphere) else _parse_hemisphere(hemi)
            region = region if isinstance(region, Region) else Region(region)
            frac = float(frac)
            if not 0.0 <= frac <= 1.0:
                raise DomainError(f"fill fraction must lie in [0, 1], got {frac}")
            if (hemi, region) in seen:
                raise DomainError(f"duplicate lesion plan entry for {hemi.value} {region.value}")
            seen.add((hemi, region))
            plan.append((hemi, region, frac))
        object.__setattr__(self, "lesion_plan", tuple(plan))


def _parse_hemisphere(name: str) -> Hemisphere:
    for h in Hemisphere:
        if name.lower() in (h.value, h.name.lower()):
            return h
    raise DomainError(f"unknown hemisphere {name!r}")


def _split(n: int, parts: int) -> list[tuple[int, int]]:
    edges = [n * i // parts for i in range(parts + 1)]
    return list(zip(edges[:-1], edges[1:]))


def _jitter(rng: SplitMix64, lo: int, hi: int) -> tuple[int, int]:
    """Shrink ``[lo, hi)`` by random margins, keeping at least half of it."""
    width = hi - lo
    slack = width // 4
    return lo + rng.below(slack + 1), hi - rng.below(slack + 1)


def region_boxes(spec: PhantomSpec) -> dict[Region, tuple[slice, slice, slice]]:
    """Left-hemisphere box of every region (right boxes are their mirrors)."""
    nx, ny, nz = spec.dims
    if nx < MIN_DIMS[0] or ny < MIN_DIMS[1] or nz < MIN_DIMS[2]:
        raise DomainError(f"dims {spec.dims} too small for 20 regions; need at least {MIN_DIMS}")
    rng = SplitMix64(spec.seed)
    half = nx // 2
    lower, upper = _split(nz, 2)
    boxes = {}
    for level, band in ((Level.BASAL_GANGLIA, lower), (Level.CORONA_RADIATA, upper)):
        regions = [r for r in Region if r.level is level]
        for region, (y0, y1) in zip(regions, _split(ny, len(regions))):
            x0, x1 = _jitter(rng, 0, half)
            y0, y1 = _jitter(rng, y0, y1)
            z0, z1 = _jitter(rng, *band)
            boxes[region] = (slice(x0, x1), slice(y0, y1), slice(z0, z1))
    return boxes


def make_anatomy(spec: PhantomSpec) -> AnatomyLabelMap:
    nx = spec.dims[0]
    labels = np.zeros(spec.dims, dtype=np.uint8)
    for region, (xs, ys, zs) in region_boxes(spec).items():
        labels[xs, ys, zs] = encode_label(Hemisphere.Left, region)
        mirrored = slice(nx - xs.stop, nx - xs.start)
        labels[mirrored, ys, zs] = encode_label(Hemisphere.Right, region)
    return AnatomyLabelMap(labels, spec.spacing)


def planned_voxels(fill_fraction: float, region_size: int) -> int:
    return min(region_size, math.floor(fill_fraction * region_size))


def _region_key(seed: int, hemi: Hemisphere, region: Region) -> int:
    rng = SplitMix64(seed ^ (encode_label(hemi, region) * GOLDEN))
    return rng.next()


def make_infarct(spec: PhantomSpec, anatomy: AnatomyLabelMap, policy: InvolvementPolicy = DEFAULT_POLICY):
    """Fill the planned fraction of each region; return the mask and the
    report the scorer is expected to produce for it."""
    if anatomy.dims != spec.dims:
        raise DomainError(f"anatomy dims {anatomy.dims} do not match spec dims {spec.dims}")
    flat_labels = anatomy.flat
    mask = np.zeros(flat_labels.size, dtype=bool)
    overlap = {h: {} for h in Hemisphere}
    sizes = {h: {} for h in Hemisphere}
    for hemi, region, frac in spec.lesion_plan:
        idx = np.flatnonzero(flat_labels == encode_label(hemi, region))
        if idx.size == 0:
            raise DomainError(f"lesion plan references empty region {hemi.value} {region.value}")
        k = planned_voxels(frac, idx.size)
        key = np.uint64(_region_key(spec.seed, hemi, region))
        order = np.lexsort((idx, mix64(idx.astype(np.uint64) ^ key)))
        mask[idx[order[:k]]] = True
        overlap[hemi][region] = k
        sizes[hemi][region] = idx.size

    infarct = BinaryMask.from_flat(spec.dims, mask, spec.spacing)
    halves = {}
    for hemi in Hemisphere:
        involved = frozenset(
            r for r, k in overlap[hemi].items() if policy.involved(k, sizes[hemi][r])
        )
        halves[hemi] = HemisphereResult(10 - len(involved), involved, overlap[hemi])
    total = sum(sum(v.values()) for v in overlap.values())
    expected = AspectsReport(
        left=halves[Hemisphere.Left],
        right=halves[Hemisphere.Right],
        infarct_volume_ml=total * spec.spacing.voxel_volume_mm3 / 1000.0,
        policy=policy.as_dict(),
    )
    return infarct, expected


def random_plan(rng: SplitMix64, max_entries: int = 8) -> tuple:
    """Random lesion plan; fractions are biased towards small values so that
    policy thresholds are exercised."""
    pairs = [(h, r) for h in Hemisphere for r in Region]
    n = rng.below(max_entries + 1)
    plan = []
    for _ in range(n):
        h, r = pairs.pop(rng.below(len(pairs)))
        u = rng.uniform()
        frac = u**3 if rng.below(2) else u
        plan.append((h, r, frac))
    return tuple(plan)


# -- score tables ------------------------------------------------------------


def _pick(rng: SplitMix64, choices: list[int]) -> int:
    return choices[rng.below(len(choices))]


def make_score_table(seed: int, n: int, exact_target: int, within2_target: int) -> ScorePairTable:
    """Table of ``n`` score pairs with exactly ``exact_target`` equal pairs and
    exactly ``within2_target`` pairs differing by at most 2."""
    if not 0 <= exact_target <= within2_target <= n:
        raise DomainError(
            f"infeasible targets: need 0 <= exact ({exact_target}) <= within2 ({within2_target}) <= n ({n})"
        )
    rng = SplitMix64(seed)
    scores = list(range(11))
    rows = []
    for i in range(n):
        a = rng.below(11)
        if i < exact_target:
            b = a
        elif i < within2_target:
            b = _pick(rng, [s for s in scores if 1 <= abs(s - a) <= 2])
        else:
            b = _pick(rng, [s for s in scores if abs(s - a) >= 3])
        rows.append((a, b))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        rows[i], rows[j] = rows[j], rows[i]
    width = max(3, len(str(n)))
    return ScorePairTable(ScorePair(f"scan_{i:0{width}d}", a, b) for i, (a, b) in enumerate(rows))
