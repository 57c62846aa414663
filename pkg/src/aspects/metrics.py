"""Segmentation overlap metrics and score-agreement statistics."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .core import (
    AnatomyLabelMap,
    BinaryMask,
    ClinicalBin,
    DomainError,
    Region,
    ScorePairTable,
    bin_score,
    check_same_lattice,
)
from .scoring import VOLUME_BUCKETS, classify_volume_bucket, infarct_volume_ml

# Region groupings of the anatomy table: M1-M3 and M4-M6 share a column
# because they sit at the same in-plane position on the two levels.
PAIRED_COLUMNS = {
    "Caudate": (Region.Caudate,),
    "Lentiform Nucleus": (Region.LentiformNucleus,),
    "Internal Capsule": (Region.InternalCapsule,),
    "Insular Ribbon": (Region.InsularCortex,),
    "M1, M4": (Region.M1, Region.M4),
    "M2, M5": (Region.M2, Region.M5),
    "M3, M6": (Region.M3, Region.M6),
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 1.0

    @property
    def specificity(self) -> float:
        denom = self.tn + self.fp
        return self.tn / denom if denom else 1.0


def _dice_arrays(a: np.ndarray, b: np.ndarray) -> float:
    sa = np.count_nonzero(a)
    sb = np.count_nonzero(b)
    if sa + sb == 0:
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / (sa + sb)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice similarity coefficient; 1.0 when both masks are empty."""
    check_same_lattice(a, b, spacing=False)
    return _dice_arrays(a.data, b.data)


def voxel_confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    check_same_lattice(pred, gt, spacing=False)
    p, g = pred.data, gt.data
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, fp=fp, tn=p.size - tp - fp - fn, fn=fn)


@dataclass(frozen=True)
class RegionDice:
    regions: dict  # Region -> dice, hemispheres merged
    paired: dict  # column name -> dice of the merged region group
    overall: float


def per_region_dice(pred: AnatomyLabelMap, gt: AnatomyLabelMap) -> RegionDice:
    check_same_lattice(pred, gt, spacing=False)
    # label -> region index (0 for background, 1..10 otherwise), merging hemispheres
    p = np.where(pred.data > 0, (pred.data.astype(np.int16) - 1) % 10 + 1, 0)
    g = np.where(gt.data > 0, (gt.data.astype(np.int16) - 1) % 10 + 1, 0)
    regions = {r: _dice_arrays(p == r.index + 1, g == r.index + 1) for r in Region}
    paired = {}
    for name, group in PAIRED_COLUMNS.items():
        ids = [r.index + 1 for r in group]
        paired[name] = _dice_arrays(np.isin(p, ids), np.isin(g, ids))
    return RegionDice(regions=regions, paired=paired, overall=_dice_arrays(p > 0, g > 0))


def dice_by_volume_bucket(cases) -> dict[str, float]:
    """Mean dice per ground-truth volume bucket; empty buckets are omitted."""
    per_bucket: dict[str, list[float]] = {}
    for pred, gt in cases:
        d = dice(pred, gt)
        per_bucket.setdefault(classify_volume_bucket(infarct_volume_ml(gt)), []).append(d)
    return {b: float(np.mean(per_bucket[b])) for b in VOLUME_BUCKETS if b in per_bucket}


# -- score tables ------------------------------------------------------------


@dataclass(frozen=True)
class ClassRates:
    """One-vs-rest rates for a single class; ``None`` marks undefined."""

    counts: ConfusionCounts

    @property
    def sensitivity(self):
        denom = self.counts.tp + self.counts.fn
        return self.counts.tp / denom if denom else None

    @property
    def specificity(self):
        denom = self.counts.tn + self.counts.fp
        return self.counts.tn / denom if denom else None

    def as_dict(self) -> dict:
        return {"sensitivity": self.sensitivity, "specificity": self.specificity}


def _one_vs_rest(pred, ref, classes) -> dict:
    pred = list(pred)
    ref = list(ref)
    out = {}
    for c in classes:
        if c not in ref:
            out[c] = None
            continue
        tp = sum(1 for x, y in zip(pred, ref) if y == c and x == c)
        fn = sum(1 for x, y in zip(pred, ref) if y == c and x != c)
        fp = sum(1 for x, y in zip(pred, ref) if y != c and x == c)
        tn = len(ref) - tp - fn - fp
        out[c] = ClassRates(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn))
    return out


def per_score_table(pairs: ScorePairTable) -> dict:
    """Sensitivity/specificity of column a against reference column b, per score.

    Scores absent from the reference column map to ``None``.
    """
    if len(pairs) == 0:
        raise DomainError("score table is empty")
    return _one_vs_rest(pairs.a.tolist(), pairs.b.tolist(), range(11))


def binned_table(pairs: ScorePairTable) -> dict:
    """As :func:`per_score_table` after mapping both columns to clinical bins."""
    if len(pairs) == 0:
        raise DomainError("score table is empty")
    a = [bin_score(s) for s in pairs.a.tolist()]
    b = [bin_score(s) for s in pairs.b.tolist()]
    return _one_vs_rest(a, b, list(ClinicalBin))


def format_pct(value: Fraction) -> str:
    """Render an exact percentage to two decimals, rounding half up."""
    d = Decimal(value.numerator) / Decimal(value.denominator)
    return str(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class AgreementStats:
    n: int
    exact_matches: int
    within2_matches: int
    pearson_r: float | None

    @property
    def exact_fraction(self) -> Fraction:
        return Fraction(100 * self.exact_matches, self.n)

    @property
    def within2_fraction(self) -> Fraction:
        return Fraction(100 * self.within2_matches, self.n)

    @property
    def exact_pct(self) -> float:
        return float(self.exact_fraction)

    @property
    def within2_pct(self) -> float:
        return float(self.within2_fraction)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "exact_pct": format_pct(self.exact_fraction),
            "within2_pct": format_pct(self.within2_fraction),
            "pearson_r": self.pearson_r,
        }


def pearson(x, y) -> float | None:
    """Sample Pearson correlation; ``None`` if n < 2 or a column is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def agreement(pairs: ScorePairTable) -> AgreementStats:
    if len(pairs) == 0:
        raise DomainError("score table is empty")
    a, b = pairs.a, pairs.b
    diff = np.abs(a - b)
    return AgreementStats(
        n=len(pairs),
        exact_matches=int(np.count_nonzero(diff == 0)),
        within2_matches=int(np.count_nonzero(diff <= 2)),
        pearson_r=pearson(a, b),
    )


def rates_to_json(table: dict) -> dict:
    """JSON-ready view of a per-score or binned table."""
    out = {}
    for key, rates in table.items():
        name = key.value if isinstance(key, ClinicalBin) else str(key)
        out[name] = None if rates is None else rates.as_dict()
    return out
