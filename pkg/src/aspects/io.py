"""Single-file MetaImage-style volumes, JSON reports and CSV score tables.

Volume layout::

    ObjectType = Image
    NDims = 3
    DimSize = nx ny nz
    ElementSpacing = sx sy sz
    ElementType = MET_UCHAR | MET_FLOAT
    ElementDataFile = LOCAL
    <raw little-endian payload, x-fastest>

Keys are written in exactly this order. The reader ignores keys it does not
know, but rejects big-endian or compressed payloads.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import (
    AnatomyLabelMap,
    AspectsError,
    AspectsReport,
    BinaryMask,
    Hemisphere,
    HemisphereResult,
    ProbabilityField,
    Region,
    ScorePair,
    ScorePairTable,
    Spacing,
    VoxelGrid,
)

REPORT_SCHEMA_VERSION = 1

ELEMENT_TYPES = {
    "MET_UCHAR": np.dtype("<u1"),
    "MET_FLOAT": np.dtype("<f4"),
}

HEADER_KEYS = ("ObjectType", "NDims", "DimSize", "ElementSpacing", "ElementType", "ElementDataFile")


class VolumeFormatError(AspectsError, ValueError):
    """Malformed volume file. ``key`` names the offending header key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class MissingKeyError(VolumeFormatError):
    pass


class HeaderValueError(VolumeFormatError):
    """A header key is present but its value is unsupported or unparsable."""


class InvalidSpacingError(HeaderValueError):
    pass


class PayloadLengthError(VolumeFormatError):
    pass


class TableFormatError(AspectsError, ValueError):
    pass


def _element_type_for(data: np.ndarray) -> str:
    if data.dtype == bool or data.dtype.kind in "iu":
        return "MET_UCHAR"
    if data.dtype.kind == "f":
        return "MET_FLOAT"
    raise TypeError(f"cannot serialise voxel dtype {data.dtype}")


def encode_volume(grid: VoxelGrid) -> bytes:
    etype = _element_type_for(grid.data)
    flat = grid.flat
    if etype == "MET_UCHAR" and flat.size and (flat.min() < 0 or flat.max() > 255):
        raise ValueError("integer voxel values must fit in an unsigned byte")
    payload = flat.astype(ELEMENT_TYPES[etype]).tobytes()
    nx, ny, nz = grid.dims
    sx, sy, sz = (repr(v) for v in grid.spacing.as_tuple())
    header = (
        "ObjectType = Image\n"
        "NDims = 3\n"
        f"DimSize = {nx} {ny} {nz}\n"
        f"ElementSpacing = {sx} {sy} {sz}\n"
        f"ElementType = {etype}\n"
        "ElementDataFile = LOCAL\n"
    )
    return header.encode("ascii") + payload


def write_volume(grid: VoxelGrid, path) -> None:
    """Write ``grid``; float data is stored as 32-bit, integers as bytes."""
    Path(path).write_bytes(encode_volume(grid))


def _parse_ints(key, value, n):
    try:
        out = [int(tok) for tok in value.split()]
    except ValueError:
        raise HeaderValueError(f"{key}: expected {n} integers, got {value!r}", key) from None
    if len(out) != n:
        raise HeaderValueError(f"{key}: expected {n} integers, got {value!r}", key)
    return out


def decode_volume(raw: bytes) -> VoxelGrid:
    header = {}
    pos = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            missing = next((k for k in HEADER_KEYS if k not in header), "ElementDataFile")
            raise MissingKeyError(f"header ended without {missing}", missing)
        try:
            line = raw[pos:end].decode("ascii").strip()
        except UnicodeDecodeError:
            missing = next((k for k in HEADER_KEYS if k not in header), "ElementDataFile")
            raise MissingKeyError(f"binary data reached before {missing}", missing) from None
        pos = end + 1
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise HeaderValueError(f"header line is not 'Key = Value': {line!r}", key.strip())
        key, value = key.strip(), value.strip()
        header[key] = value
        if key == "ElementDataFile":
            break

    for key in HEADER_KEYS:
        if key not in header:
            raise MissingKeyError(f"missing header key {key}", key)

    if header["ObjectType"] != "Image":
        raise HeaderValueError(f"ObjectType must be Image, got {header['ObjectType']!r}", "ObjectType")
    if header["NDims"] != "3":
        raise HeaderValueError(f"NDims must be 3, got {header['NDims']!r}", "NDims")
    if header["ElementDataFile"] != "LOCAL":
        raise HeaderValueError("only ElementDataFile = LOCAL is supported", "ElementDataFile")
    for key in ("ElementByteOrderMSB", "BinaryDataByteOrderMSB", "CompressedData"):
        if header.get(key, "False").lower() == "true":
            raise HeaderValueError(f"{key} = True is not supported", key)
    etype = header["ElementType"]
    if etype not in ELEMENT_TYPES:
        raise HeaderValueError(f"unsupported ElementType {etype!r}", "ElementType")

    dims = _parse_ints("DimSize", header["DimSize"], 3)
    if min(dims) < 1:
        raise HeaderValueError(f"DimSize must be positive, got {dims}", "DimSize")
    try:
        spacing = [float(tok) for tok in header["ElementSpacing"].split()]
    except ValueError:
        raise InvalidSpacingError(
            f"ElementSpacing is not numeric: {header['ElementSpacing']!r}", "ElementSpacing"
        ) from None
    if len(spacing) != 3:
        raise InvalidSpacingError("ElementSpacing needs 3 values", "ElementSpacing")
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise InvalidSpacingError(f"ElementSpacing must be positive, got {spacing}", "ElementSpacing")

    dtype = ELEMENT_TYPES[etype]
    expected = math.prod(dims) * dtype.itemsize
    payload = raw[pos:]
    if len(payload) != expected:
        raise PayloadLengthError(
            f"payload is {len(payload)} bytes, DimSize/ElementType require {expected}", "DimSize"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    return VoxelGrid.from_flat(dims, flat.astype(dtype.newbyteorder("=")), Spacing(*spacing))


def read_volume(path) -> VoxelGrid:
    """Read a volume; uint8 data for MET_UCHAR, float32 for MET_FLOAT."""
    return decode_volume(Path(path).read_bytes())


def read_mask(path) -> BinaryMask:
    g = read_volume(path)
    return BinaryMask(g.data, g.spacing)


def read_labels(path) -> AnatomyLabelMap:
    g = read_volume(path)
    return AnatomyLabelMap(g.data, g.spacing)


def read_probability(path) -> ProbabilityField:
    g = read_volume(path)
    return ProbabilityField(g.data, g.spacing)


# -- reports -----------------------------------------------------------------


def report_to_dict(report: AspectsReport) -> dict:
    out = {"schema_version": REPORT_SCHEMA_VERSION}
    for hemi in Hemisphere:
        res = report.hemisphere(hemi)
        out[hemi.value] = {
            "score": res.score,
            "involved": [r.value for r in Region if r in res.involved],
            "overlap_voxels": {r.value: res.overlap_voxels[r] for r in Region},
        }
    out["infarct_volume_ml"] = float(report.infarct_volume_ml)
    out["affected_hemisphere"] = report.affected_hemisphere.value
    out["bin"] = report.bin.value
    out["policy"] = dict(report.policy)
    return out


def report_from_dict(doc: dict) -> AspectsReport:
    version = doc.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {version!r}")
    halves = {}
    for hemi in Hemisphere:
        h = doc[hemi.value]
        halves[hemi] = HemisphereResult(
            score=int(h["score"]),
            involved=frozenset(Region(name) for name in h["involved"]),
            overlap_voxels={Region(k): int(v) for k, v in h["overlap_voxels"].items()},
        )
    report = AspectsReport(
        left=halves[Hemisphere.Left],
        right=halves[Hemisphere.Right],
        infarct_volume_ml=float(doc["infarct_volume_ml"]),
        policy=dict(doc.get("policy", {})),
    )
    if "affected_hemisphere" in doc and doc["affected_hemisphere"] != report.affected_hemisphere.value:
        raise ValueError("affected_hemisphere inconsistent with per-hemisphere scores")
    if "bin" in doc and doc["bin"] != report.bin.value:
        raise ValueError("bin inconsistent with affected hemisphere score")
    return report


def write_report(report: AspectsReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")


def read_report(path) -> AspectsReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- score tables ------------------------------------------------------------

TABLE_HEADER = ("scan_id", "score_a", "score_b")


def read_score_table(path) -> ScorePairTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TABLE_HEADER:
            raise TableFormatError(f"expected header {','.join(TABLE_HEADER)}, got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TableFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                rows.append(ScorePair(row[0].strip(), int(row[1]), int(row[2])))
            except ValueError as exc:
                raise TableFormatError(f"line {lineno}: {exc}") from None
    try:
        return ScorePairTable(rows)
    except ValueError as exc:
        raise TableFormatError(str(exc)) from None


def write_score_table(table: ScorePairTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for r in table:
            writer.writerow((r.scan_id, r.score_a, r.score_b))
