import numpy as np
import pytest

from aspects.core import AnatomyLabelMap, DomainError, Hemisphere, Level, Region, decode_label, encode_label
from aspects.io import encode_volume
from aspects.metrics import agreement
from aspects.phantom import (
    PhantomSpec,
    SplitMix64,
    make_anatomy,
    make_infarct,
    make_score_table,
    mix64,
    random_plan,
)
from aspects.scoring import region_sizes, score


def test_splitmix_reference_values():
    # Published SplitMix64 outputs for seed 0 (Vigna's reference implementation)
    rng = SplitMix64(0)
    assert [rng.next() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]
    x = np.array([0, 0x9E3779B97F4A7C15], dtype=np.uint64)
    assert int(mix64(x)[0]) == 0xE220A8397B1DCDAF
    assert int(mix64(x)[1]) == 0x6E789E6AA1B965F4


def test_default_anatomy_layout():
    spec = PhantomSpec(seed=3)
    anatomy = make_anatomy(spec)
    assert anatomy.dims == (64, 64, 32)
    labels = set(np.unique(anatomy.data).tolist()) - {0}
    assert labels == set(range(1, 21))
    nx, _, nz = anatomy.dims
    for lab in labels:
        hemi, region = decode_label(lab)
        xs, _, zs = np.nonzero(anatomy.data == lab)
        if hemi is Hemisphere.Left:
            assert xs.max() < nx / 2
        else:
            assert xs.min() >= nx / 2
        if region.level is Level.BASAL_GANGLIA:
            assert zs.max() < nz // 2
        else:
            assert zs.min() >= nz // 2


def test_anatomy_is_deterministic_and_seeded():
    a = encode_volume(make_anatomy(PhantomSpec(seed=11)))
    b = encode_volume(make_anatomy(PhantomSpec(seed=11)))
    c = encode_volume(make_anatomy(PhantomSpec(seed=12)))
    assert a == b
    assert a != c


@pytest.mark.parametrize("seed", range(5))
def test_hemispheres_mirror(seed):
    anatomy = make_anatomy(PhantomSpec(seed=seed, dims=(33, 20, 9)))
    sizes = region_sizes(anatomy)
    for r in Region:
        assert sizes[(Hemisphere.Left, r)] == sizes[(Hemisphere.Right, r)] > 0


def test_dims_too_small():
    with pytest.raises(DomainError):
        make_anatomy(PhantomSpec(dims=(64, 6, 32)))
    with pytest.raises(DomainError):
        make_anatomy(PhantomSpec(dims=(1, 64, 32)))
    # the minimum still hosts all 20 regions
    anatomy = make_anatomy(PhantomSpec(dims=(2, 7, 2)))
    assert set(np.unique(anatomy.data).tolist()) - {0} == set(range(1, 21))


def test_empty_plan():
    spec = PhantomSpec()
    infarct, expected = make_infarct(spec, make_anatomy(spec))
    assert infarct.count == 0
    assert expected.left.score == expected.right.score == 10


def test_plan_caudate_m4():
    spec = PhantomSpec(seed=5, lesion_plan=(("left", "Caudate", 0.5), ("left", "M4", 0.2)))
    anatomy = make_anatomy(spec)
    infarct, expected = make_infarct(spec, anatomy)
    assert expected.left.score == 8
    assert expected.left.involved == {Region.Caudate, Region.M4}
    sizes = region_sizes(anatomy)
    assert expected.left.overlap_voxels[Region.Caudate] == sizes[(Hemisphere.Left, Region.Caudate)] // 2
    assert score(infarct, anatomy) == expected


def test_small_fill_below_threshold():
    spec = PhantomSpec(seed=2)
    anatomy = make_anatomy(spec)
    size = region_sizes(anatomy)[(Hemisphere.Right, Region.M2)]
    assert size > 500  # so 5 voxels is under both 10 voxels and 1% of the region
    spec = PhantomSpec(seed=2, lesion_plan=(("right", "M2", 5.5 / size),))
    infarct, expected = make_infarct(spec, anatomy)
    assert infarct.count == 5
    assert expected.right.score == 10
    assert expected.right.overlap_voxels[Region.M2] == 5
    assert score(infarct, anatomy) == expected


def test_plan_validation():
    with pytest.raises(DomainError):
        PhantomSpec(lesion_plan=(("left", "Caudate", 1.5),))
    with pytest.raises(DomainError):
        PhantomSpec(lesion_plan=(("left", "Caudate", 0.5), ("Left", "Caudate", 0.1)))
    with pytest.raises(DomainError):
        PhantomSpec(lesion_plan=(("middle", "Caudate", 0.5),))
    with pytest.raises(ValueError):
        PhantomSpec(lesion_plan=(("left", "Thalamus", 0.5),))


def test_plan_referencing_empty_region():
    spec = PhantomSpec(dims=(8, 8, 4), lesion_plan=(("left", "M1", 0.5),))
    anatomy = make_anatomy(PhantomSpec(dims=(8, 8, 4)))
    hollow = AnatomyLabelMap(np.where(anatomy.data == encode_label(Hemisphere.Left, Region.M1), 0, anatomy.data))
    with pytest.raises(DomainError):
        make_infarct(spec, hollow)


@pytest.mark.parametrize("seed", range(20))
def test_random_plans_end_to_end(seed):
    rng = SplitMix64(seed)
    dims = (2 + rng.below(40), 7 + rng.below(40), 2 + rng.below(20))
    spec = PhantomSpec(seed=seed, dims=dims, lesion_plan=random_plan(rng))
    anatomy = make_anatomy(spec)
    infarct, expected = make_infarct(spec, anatomy)
    assert score(infarct, anatomy) == expected


def test_score_table_targets():
    t = make_score_table(1, 147, 58, 113)
    s = agreement(t)
    assert (s.n, s.exact_matches, s.within2_matches) == (147, 58, 113)
    assert s.as_dict()["exact_pct"] == "39.46"
    assert s.as_dict()["within2_pct"] == "76.87"
    assert make_score_table(1, 147, 58, 113) == t


def test_score_table_all_exact():
    t = make_score_table(4, 10, 10, 10)
    assert t.a.tolist() == t.b.tolist()
    s = agreement(t)
    assert s.pearson_r is None or s.pearson_r == pytest.approx(1.0)


def test_score_table_all_far():
    t = make_score_table(4, 5, 0, 0)
    assert all(abs(r.score_a - r.score_b) >= 3 for r in t)


@pytest.mark.parametrize("args", [(0, 5, 3, 2), (0, 5, 6, 6), (0, 5, -1, 2)])
def test_score_table_infeasible(args):
    with pytest.raises(DomainError):
        make_score_table(*args)
