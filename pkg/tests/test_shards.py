"""Stacked tiles and raw shards: exact fibers, partitions, tube inclusions."""

import pytest

from twistedhaar import (
    DyadicRational as DR,
    FactorSpec,
    Profile,
    raw_pre_shard,
    raw_shard,
    raw_shard_intermediate,
    read_fbr1,
    shard_lattice,
    stacked_tile,
    tube_sigma,
    verify_partition,
    write_fbr1,
)
from twistedhaar.errors import ComparisonFailure, RegimeError, ResolutionError
from twistedhaar.shards import case_parameters, make_factors, rect_area, zeta_shift

CASE_J = {1: (1, 0, -1), 2: (2, 0, 1), 3: (0, 0, 1)}


class TestProfile:
    def test_zero(self):
        p = Profile.zero()
        assert p.value((0,)) == DR.zero()
        assert p.sup_norm().is_zero

    def test_staircase_deterministic(self):
        a = Profile.staircase(1, 2, 7)
        b = Profile.staircase(1, 2, 7)
        c = Profile.staircase(1, 2, 8)
        assert a == b
        assert a != c

    def test_staircase_bound(self):
        p = Profile.staircase(1, 3, 1)
        assert not (p.sup_norm() > DR.pow2(-10))

    def test_cell_lookup(self):
        p = Profile(1, 1, (DR.from_int(1), DR.from_int(2)))
        assert p.cell_of((DR(1, -2),)) == (0,)     # 0.25 in the first half
        assert p.value((1,)) == DR.from_int(2)
        with pytest.raises(ResolutionError):
            p.value((2,))

    def test_value_count_checked(self):
        with pytest.raises(ResolutionError):
            Profile(1, 1, (DR.zero(),))            # needs 2 values at res 1


class TestFactorSpec:
    def test_strict_needs_large_kappa(self):
        with pytest.raises(RegimeError):
            FactorSpec(1, Profile.zero(), 3, strict=True)
        FactorSpec(1, Profile.zero(), 10, strict=True)

    def test_relaxed_flag_marks_oversized_profile(self):
        big = Profile(1, 0, (DR.from_int(1),))
        spec = FactorSpec(1, big, 0)
        assert spec.relaxed_flag
        ok = FactorSpec(1, Profile.staircase(1, 1, 0), 0)
        assert not ok.relaxed_flag

    def test_negative_kappa_rejected(self):
        with pytest.raises(RegimeError):
            FactorSpec(1, Profile.zero(), -1)

    def test_mismatched_kappa_rejected(self):
        specs = (FactorSpec(1, Profile.zero(), 0),
                 FactorSpec(2, Profile.zero(), 1),
                 FactorSpec(3, Profile.zero(), 0))
        with pytest.raises(RegimeError):
            raw_pre_shard(specs, (1, 0, 0))


class TestStackedTile:
    def test_fiber_lengths_exact(self, stair_specs):
        for j in (-1, 0, 2):
            for spec in stair_specs:
                tile = stacked_tile(spec, j)
                want = DR.pow2(2 * j + spec.kappa)
                for rects in tile.fibers.values():
                    assert len(rects) == 1
                    (lo, hi), = rects
                    assert hi - lo == want

    def test_anchors_scale_with_square_of_side(self, stair_specs):
        spec = stair_specs[0]
        j = 2
        tile = stacked_tile(spec, j)
        for cell, rects in tile.fibers.items():
            assert rects[0][0] == spec.profile.value(cell).mul_pow2(2 * j)

    def test_box_is_scaled_cube(self, zero_specs):
        tile = stacked_tile(zero_specs[0], 3)
        assert tile.boxes == ((DR.zero(), DR.from_int(8)),)

    def test_volume(self, zero_specs):
        tile = stacked_tile(zero_specs[1], 1)
        # side 2^1 times fiber 2^2
        assert tile.volume() == DR.from_int(8)


class TestRawShards:
    def test_pre_shard_fportrait(self, zero_specs):
        j = (1, 0, -1)
        pre = raw_pre_shard(zero_specs, j)
        (rect,), = [list(v) for v in pre.fibers.values()]
        assert rect_area(rect) == DR.pow2(2 * 1) * DR.pow2(0)

    def test_case_detection(self, zero_specs):
        assert raw_shard(1, zero_specs, (1, 0, -1)) is not None
        with pytest.raises(RegimeError):
            raw_shard(1, zero_specs, (2, 0, 1))      # that j is case 2
        with pytest.raises(RegimeError):
            raw_shard(2, zero_specs, (1, 0, -1))

    def test_regime_ties_rejected(self, zero_specs):
        for j in ((1, 1, 1), (1, 0, 0), (1, 0, 1)):
            with pytest.raises(RegimeError):
                raw_shard(1, zero_specs, j)

    def test_case1_fiber_is_2l1_by_2l2(self, zero_specs):
        j = (1, 0, -1)
        par = case_parameters(1, j, 0)
        shard = raw_shard(1, zero_specs, j)
        for rects in shard.fibers.values():
            u = sorted({(r[0], r[1]) for r in rects})
            v = sorted({(r[2], r[3]) for r in rects})
            width = max(r[1] for r in rects) - min(r[0] for r in rects)
            height = max(r[3] for r in rects) - min(r[2] for r in rects)
            assert width == par["L1"].mul_pow2(1)
            assert height == par["L2"].mul_pow2(1)
            total = DR.zero()
            for r in rects:
                total = total + rect_area(r)
            assert total == par["L1"] * par["L2"] * 4

    def test_case3_staircase_of_n_bands(self, zero_specs):
        j = (0, 0, 1)
        par = case_parameters(3, j, 0)
        n = par["N"]
        shard = raw_shard(3, zero_specs, j)
        assert shard.frame == "t"
        for rects in shard.fibers.values():
            assert len(rects) == n
            total = DR.zero()
            for r in rects:
                total = total + rect_area(r)
            assert total == par["L1"] * 6 * (par["L1"] * 2) * n

    def test_intermediate_fiber_2l_by_2l(self, stair_specs):
        j = (0, 0, 1)
        mid = raw_shard_intermediate(stair_specs, j)
        side = DR.pow2(2 * 0 + 0).mul_pow2(1)
        for rects in mid.fibers.values():
            width = max(r[1] for r in rects) - min(r[0] for r in rects)
            height = max(r[3] for r in rects) - min(r[2] for r in rects)
            assert width == side and height == side

    def test_translate_moves_boxes_and_fibers(self, zero_specs):
        shard = raw_shard(1, zero_specs, (1, 0, -1))
        moved = shard.translate(spatial=[DR.one()] * 3,
                                central=(DR.from_int(2), DR.from_int(3)))
        for (lo, hi), (mlo, mhi) in zip(shard.boxes, moved.boxes):
            assert mlo - lo == DR.one() and mhi - hi == DR.one()
        for key in shard.fibers:
            for r, mr in zip(shard.fibers[key], moved.fibers[key]):
                assert mr[0] - r[0] == DR.from_int(2)
                assert mr[2] - r[2] == DR.from_int(3)


class TestLattice:
    def test_generators(self, zero_specs):
        lat1 = shard_lattice(1, (1, 0, -1), zero_specs)
        l1 = DR.pow2(2)
        l2 = DR.pow2(0)
        assert lat1.central_gens == ((l1 * 2, DR.zero()), (DR.zero(), l2 * 2))

        lat3 = shard_lattice(3, (0, 0, 1), zero_specs)
        par = case_parameters(3, (0, 0, 1), 0)
        l, n = par["L1"], par["N"]
        assert lat3.central_gens == ((l * 6, DR.zero()), (l * (2 * n), l * (2 * n)))

    def test_zeta_shift_is_exact_triple(self, stair_specs):
        zs = zeta_shift(stair_specs, (1, 0, -1))
        assert len(zs) == 3
        assert all(isinstance(z, DR) for z in zs)


class TestPartition:
    @pytest.mark.parametrize("case", [1, 2, 3])
    def test_raw_partition_multiplicity_one(self, zero_specs, case):
        rep = verify_partition(case, zero_specs, CASE_J[case])
        assert rep.ok
        assert rep.min_mult == rep.max_mult == 1
        assert not rep.failures
        assert rep.cells_checked >= 1

    def test_staircase_profile_partition(self, stair_specs):
        rep = verify_partition(1, stair_specs, (1, 0, -1))
        assert rep.ok

    def test_broken_lattice_fails(self, zero_specs):
        lat = shard_lattice(1, (1, 0, -1), zero_specs)
        (a, b), (c, d) = lat.central_gens
        rep = verify_partition(1, zero_specs, (1, 0, -1),
                               lattice_override=((a + a + a, b), (c, d)))
        assert not rep.ok
        assert rep.failures

    def test_custom_window(self, zero_specs):
        w = (DR.from_int(-4), DR.from_int(4), DR.from_int(-2), DR.from_int(2))
        rep = verify_partition(1, zero_specs, (1, 0, -1), window=w)
        assert rep.ok
        assert rep.window == w


class TestTubeSigma:
    def test_zero_profile_case1(self, zero_specs):
        rep = tube_sigma(1, zero_specs, (1, 0, -1))
        assert 1 <= rep.sigma <= 10
        assert rep.sigma == max(rep.inner_sigma, rep.outer_sigma)
        assert rep.inner_slack >= 0 and rep.outer_slack >= 0

    def test_translated_shard_same_sigma(self, zero_specs):
        j = (1, 0, -1)
        base = tube_sigma(1, zero_specs, j)
        lat = shard_lattice(1, j, zero_specs)
        (g1u, g1v), _ = lat.central_gens
        shard = raw_shard(1, zero_specs, j).translate(central=(g1u, g1v))
        moved = tube_sigma(1, zero_specs, j, shard=shard, lattice_point=(g1u, g1v))
        assert moved.sigma == base.sigma

    def test_sigma_cap_raises(self, zero_specs):
        j = (1, 0, -1)
        shard = raw_shard(1, zero_specs, j).translate(
            central=(DR.from_int(512), DR.zero()))
        with pytest.raises(ComparisonFailure):
            tube_sigma(1, zero_specs, j, shard=shard, sigma_max=3)


class TestFbr1:
    def test_roundtrip_tile(self, stair_specs, tmp_path):
        tile = stacked_tile(stair_specs[0], 1)
        p = tmp_path / "tile.fbr1"
        write_fbr1(tile, p, label="tile")
        header, back = read_fbr1(p)
        assert back == tile
        assert header["label"] == "tile"

    def test_roundtrip_case3(self, zero_specs, tmp_path):
        shard = raw_shard(3, zero_specs, (0, 0, 1))
        p = tmp_path / "s3.fbr1"
        write_fbr1(shard, p)
        _, back = read_fbr1(p)
        assert back == shard
        assert back.frame == "t"
