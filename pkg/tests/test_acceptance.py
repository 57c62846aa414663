"""Exit criteria. Run with ``pytest tests/test_acceptance.py``; the terminal
summary lists one PASS/FAIL line per criterion."""

import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from aspects import cli
from aspects.core import BinaryMask, ClinicalBin, Spacing, VoxelGrid, bin_score
from aspects.io import (
    HeaderValueError,
    InvalidSpacingError,
    MissingKeyError,
    PayloadLengthError,
    decode_volume,
    encode_volume,
    read_volume,
    write_volume,
)
from aspects.losses import (
    FocalParams,
    LossWeights,
    boundary_loss,
    combined_loss,
    dice_loss,
    focal_loss,
    gradient_check,
    signed_distance,
)
from aspects.metrics import agreement, dice, format_pct, voxel_confusion
from aspects.core import ScorePairTable
from aspects.phantom import PhantomSpec, SplitMix64, make_anatomy, make_infarct, make_score_table, random_plan
from aspects.scoring import infarct_volume_ml, score

acceptance = pytest.mark.acceptance


@acceptance("AC1", "scoring equals analytic phantom report on 200 random phantoms, <= 60 s")
def test_ac1_scoring_oracle_equivalence():
    start = time.perf_counter()
    for seed in range(200):
        rng = SplitMix64(10_000 + seed)
        dims = (2 + rng.below(63), 7 + rng.below(58), 2 + rng.below(31))
        spacing = tuple(0.25 + 4 * rng.uniform() for _ in range(3))
        spec = PhantomSpec(seed=seed, dims=dims, spacing=spacing, lesion_plan=random_plan(rng, 12))
        anatomy = make_anatomy(spec)
        infarct, expected = make_infarct(spec, anatomy)
        got = score(infarct, anatomy)
        assert (got.left.score, got.right.score) == (expected.left.score, expected.right.score)
        assert got.left.involved == expected.left.involved
        assert got.right.involved == expected.right.involved
        assert got.affected_hemisphere is expected.affected_hemisphere
        assert got.bin is expected.bin
        assert got == expected
    elapsed = time.perf_counter() - start
    print(f"AC1: 200 phantoms in {elapsed:.2f} s")
    assert elapsed <= 60.0


@acceptance("AC2", "volume: 1000 voxels at 0.5x0.5x5 mm = 1.25 ml; linear in voxel count")
def test_ac2_volume():
    flat = np.zeros(20 * 20 * 5, dtype=bool)
    flat[:1000] = True
    mask = BinaryMask(flat.reshape(20, 20, 5), Spacing(0.5, 0.5, 5.0))
    assert abs(infarct_volume_ml(mask) - 1.25) <= 1e-12 * 1.25

    rng = np.random.default_rng(2)
    for _ in range(50):
        shape = tuple(int(s) for s in rng.integers(1, 16, 3))
        sp = Spacing(*rng.uniform(0.1, 5.0, 3))
        m = rng.random(shape) < rng.random()
        n = int(m.sum())
        v = infarct_volume_ml(BinaryMask(m, sp))
        expected = n * sp.sx * sp.sy * sp.sz / 1000.0
        assert abs(v - expected) <= 1e-12 * max(expected, 1e-300)
        doubled = infarct_volume_ml(BinaryMask(np.concatenate([m, m]), sp))
        assert abs(doubled - 2 * v) <= 1e-12 * max(2 * v, 1e-300)


@acceptance("AC3", "clinical bins match 'A (0-3)', 'B (4-7)', 'C (8-10)' for scores 0-10")
def test_ac3_binning():
    labels = {ClinicalBin.A: "A (0-3)", ClinicalBin.B: "B (4-7)", ClinicalBin.C: "C (8-10)"}
    for s in range(11):
        b = bin_score(s)
        lo, hi = (int(x) for x in labels[b][3:-1].split("-"))
        assert lo <= s <= hi
        assert b.label == labels[b]


@acceptance("AC4", "147-row table with 58 exact / 113 within-2 -> 39.46% / 76.87%")
def test_ac4_inter_reader_arithmetic():
    table = make_score_table(2022, 147, 58, 113)
    stats = agreement(table)
    assert format_pct(stats.exact_fraction) == "39.46"
    assert format_pct(stats.within2_fraction) == "76.87"
    # the reported 39.45 is within one unit in the last place
    assert abs(Fraction(5800, 147) - Fraction(3945, 100)) < Fraction(1, 100)


@acceptance("AC5", "focal/dice/boundary/combined gradients vs central differences <= 1e-4; 3L1+L2+L3 to 1e-12")
def test_ac5_gradient_checks():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        shape = tuple(int(s) for s in rng.integers(2, 9, 3))
        g = rng.random(shape) < rng.uniform(0.2, 0.8)
        g.flat[0], g.flat[-1] = True, False
        p = rng.uniform(0.01, 0.99, shape)
        focal = FocalParams(float(rng.uniform(0, 4)), float(rng.uniform(0.05, 0.95)))
        smooth = float(rng.uniform(0.1, 2.0))
        for fn in (
            lambda x: focal_loss(x, g, focal),
            lambda x: dice_loss(x, g, smooth),
            lambda x: boundary_loss(x, g),
            lambda x: combined_loss(x, g, LossWeights(), focal, smooth),
        ):
            err = gradient_check(fn, p, step=1e-5)
            worst = max(worst, err)
            assert err <= 1e-4
        l1 = focal_loss(p, g, focal)[0]
        l2 = boundary_loss(p, g)[0]
        l3 = dice_loss(p, g, smooth)[0]
        total = combined_loss(p, g, LossWeights(3, 1, 1), focal, smooth)[0]
        assert abs(total - (3 * l1 + l2 + l3)) <= 1e-12
    print(f"AC5: worst relative gradient error {worst:.2e}")


@acceptance("AC6", "signed distance equals O(n^2) brute force exactly on 10 random <= 12^3 masks")
def test_ac6_signed_distance():
    rng = np.random.default_rng(6)
    for _ in range(10):
        shape = tuple(int(s) for s in rng.integers(2, 13, 3))
        g = rng.random(shape) < rng.uniform(0.05, 0.95)
        g.flat[0], g.flat[-1] = True, False
        assert signed_distance(g).data.tolist() == oracles.signed_distance(g)


@acceptance("AC7", "dice = 2tp/(2tp+fp+fn) on 100 pairs; agreement and Pearson match brute force on 100 tables")
def test_ac7_metric_identities():
    rng = np.random.default_rng(7)
    for _ in range(100):
        shape = tuple(int(s) for s in rng.integers(1, 12, 3))
        a = BinaryMask(rng.random(shape) < rng.random())
        b = BinaryMask(rng.random(shape) < rng.random())
        c = voxel_confusion(a, b)
        denom = 2 * c.tp + c.fp + c.fn
        expected = 2 * c.tp / denom if denom else 1.0
        assert abs(dice(a, b) - expected) <= 1e-12
    for _ in range(100):
        n = int(rng.integers(1, 51))
        x = rng.integers(0, 11, n).tolist()
        y = rng.integers(0, 11, n).tolist()
        stats = agreement(ScorePairTable.from_scores(x, y))
        exact, within2 = oracles.agreement(x, y)
        assert abs(stats.exact_pct - exact) <= 1e-10
        assert abs(stats.within2_pct - within2) <= 1e-10
        r = oracles.pearson(x, y)
        if r is None:
            assert stats.pearson_r is None
        else:
            assert abs(stats.pearson_r - r) <= 1e-10


@acceptance("AC8", "100 random volumes round-trip bit-exactly; malformed headers raise documented errors")
def test_ac8_io_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    for i in range(100):
        shape = tuple(int(s) for s in rng.integers(1, 10, 3))
        if i % 2:
            data = rng.standard_normal(shape).astype(np.float32)
        else:
            data = rng.integers(0, 256, shape).astype(np.uint8)
        grid = VoxelGrid(data, Spacing(*rng.uniform(0.05, 10.0, 3)))
        path = tmp_path / f"v{i}.mha"
        write_volume(grid, path)
        back = read_volume(path)
        assert back == grid and back.data.tobytes() == grid.data.tobytes()
        assert encode_volume(back) == path.read_bytes()

    good = encode_volume(VoxelGrid(np.zeros((2, 2, 1), dtype=np.uint8)))
    header, payload = good.split(b"LOCAL\n")
    header = header + b"LOCAL\n"
    cases = [
        (header.replace(b"NDims = 3\n", b""), MissingKeyError),
        (header.replace(b"NDims = 3", b"NDims = 2"), HeaderValueError),
        (header.replace(b"ElementSpacing = 1.0 1.0 1.0", b"ElementSpacing = 1.0 0.0 1.0"), InvalidSpacingError),
    ]
    for raw, error in cases:
        with pytest.raises(error):
            decode_volume(raw + payload)
    with pytest.raises(PayloadLengthError):
        decode_volume(header + payload[:-1])


@acceptance("AC9", "phantom -> score CLI pipeline under 1 s per 64x64x32 scan")
def test_ac9_cli_pipeline(tmp_path, capsys):
    for seed in range(5):
        out = tmp_path / f"s{seed}"
        start = time.perf_counter()
        assert cli.main(["phantom", "--seed", str(seed), "--out-dir", str(out)]) == 0
        assert cli.main(["score", "--infarct", str(out / "infarct.mha"), "--anatomy", str(out / "anatomy.mha"),
                         "--out", str(out / "report.json")]) == 0
        elapsed = time.perf_counter() - start
        assert (out / "report.json").read_text() == (out / "expected_report.json").read_text()
        assert elapsed < 1.0

    # same pipeline as two fresh processes, interpreter start-up included
    out = tmp_path / "proc"
    start = time.perf_counter()
    subprocess.run([sys.executable, "-m", "aspects", "phantom", "--out-dir", str(out)], check=True, capture_output=True)
    res = subprocess.run(
        [sys.executable, "-m", "aspects", "score", "--infarct", str(out / "infarct.mha"),
         "--anatomy", str(out / "anatomy.mha"), "--out", str(out / "report.json")],
        check=True, capture_output=True, text=True,
    )
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    print(f"AC9: two-process pipeline {elapsed:.2f} s")
    assert "score: 8/10" in res.stdout
    assert elapsed < 1.0
