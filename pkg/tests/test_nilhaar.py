"""Tri-parameter systems on the quotient model: shards, bases, the nil frame."""

from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from twistedhaar import (
    AnalyticShard,
    DyadicRational as DR,
    NilpotentHaarIndex,
    NilSystem,
    analytic_family,
    analytic_fibered_region,
    comparability_check,
    enumerate_nil_indices,
    inner_product,
    l2_norm_sq,
    nil_coefficient,
    nilpotent_analyze,
    nilpotent_cond_expect,
    nilpotent_frame,
    nilpotent_haar_signal,
    nilpotent_mart_diff,
    nilpotent_square_fn_sq,
    nilpotent_synthesize,
    random_signal,
    read_nil_thc1,
    shard_cells,
    shard_parent,
    write_nil_thc1,
)
from twistedhaar.errors import DimensionMismatch, ScaleError
from twistedhaar.nilhaar import (
    NIL_TYPES,
    extended_triples,
    nil_haar_pattern,
    nilpotent_cond_expect_direct,
    nilpotent_square_fn_dyadic_sq,
    shard_volume_exp,
)


def zero_shard(ns, type_k, j):
    base = 2 if type_k == 3 else type_k
    pairing = {1: (1, 2), 2: (1, 3)}[base]
    pos = tuple((0, 0) if mu in pairing else (0,) for mu in (1, 2, 3))
    return AnalyticShard(type_k, j, pos)


class TestModelGrid:
    def test_cell_counts(self, ns1, ns2):
        assert ns1.grid.ncells == 128
        assert ns2.grid.ncells == 16384

    def test_axis_layout(self, ns1):
        spatial, central = ns1.grid.axes[:3], ns1.grid.axes[3:]
        assert len(central) == 2
        for ax in spatial:
            assert ax.cells == 2       # extent 2^1, unit cells
        for ax in central:
            assert ax.cells == 4       # extent 2^2 at kappa 0

    def test_scale_window(self, ns2):
        assert (ns2.s_min, ns2.s_max) == (1, 2)
        assert ns2.avg_level == 3


class TestShards:
    def test_family_partitions_grid(self, ns2):
        for type_k in NIL_TYPES:
            for j in ((1, 1, 1), (1, 2, 1), (2, 2, 2)):
                fam = analytic_family(ns2, type_k, j)
                cover = np.zeros(ns2.grid.ncells, dtype=np.int64)
                for sh in fam:
                    cover[shard_cells(ns2, sh)] += 1
                assert cover.min() == 1 and cover.max() == 1, (type_k, j)

    def test_volume_exponent_matches_cell_count(self, ns2):
        cve = ns2.grid.cell_volume_exp
        for type_k in NIL_TYPES:
            sh = zero_shard(ns2, type_k, (1, 2, 1))
            cells = shard_cells(ns2, sh)
            assert len(cells) == 1 << (shard_volume_exp(ns2, sh) - cve)

    def test_parent_contains_child(self, ns2):
        for type_k in NIL_TYPES:
            fam = analytic_family(ns2, type_k, (1, 1, 1))
            for sh in fam:
                par = shard_parent(ns2, sh)
                assert par.j == (2, 2, 2)
                child = shard_cells(ns2, sh)
                inside = shard_cells(ns2, par)
                assert np.all(np.isin(child, inside, assume_unique=True))

    def test_bad_scale_rejected(self, ns1):
        with pytest.raises(ScaleError):
            shard_cells(ns1, zero_shard(ns1, 1, (2, 1, 1)))


class TestElements:
    def test_counts_match_dimension(self, ns1):
        for type_k in NIL_TYPES:
            idxs = enumerate_nil_indices(ns1, type_k)
            assert len(idxs) == ns1.grid.ncells - 1

    def test_unit_norms(self, ns1):
        for type_k in NIL_TYPES:
            for idx in enumerate_nil_indices(ns1, type_k):
                assert l2_norm_sq(nilpotent_haar_signal(ns1, idx)) == DR.one()

    def test_orthogonality_integer_gram(self, ns1):
        cve = ns1.grid.cell_volume_exp
        for type_k in NIL_TYPES:
            idxs = enumerate_nil_indices(ns1, type_k)
            pats, vexps = [], []
            for idx in idxs:
                pat, vexp = nil_haar_pattern(ns1, idx)
                pats.append(pat)
                vexps.append(vexp)
            gram = np.array(pats, dtype=np.int64) @ np.array(pats, dtype=np.int64).T
            off = gram - np.diag(np.diag(gram))
            assert not off.any()
            for r, v in enumerate(vexps):
                assert int(gram[r, r]) == 1 << (v - cve)

    def test_support_is_the_shard(self, ns1):
        for type_k in NIL_TYPES:
            for idx in enumerate_nil_indices(ns1, type_k)[:20]:
                pat, _ = nil_haar_pattern(ns1, idx)
                want = np.sort(shard_cells(ns1, idx.shard()))
                assert np.array_equal(np.flatnonzero(pat), want)

    def test_type3_is_theta_pullback_of_type2(self, ns1):
        idxs2 = enumerate_nil_indices(ns1, 2)
        for idx2 in idxs2:
            idx3 = NilpotentHaarIndex(3, idx2.scales, idx2.pos, idx2.eps)
            h2 = nilpotent_haar_signal(ns1, idx2)
            h3 = nilpotent_haar_signal(ns1, idx3)
            assert h3.equals(ns1.transport(h2, 3))

    def test_mean_zero(self, ns1):
        for idx in enumerate_nil_indices(ns1, 3)[:20]:
            assert nilpotent_haar_signal(ns1, idx).total().is_zero


class TestAnalysis:
    def test_analyze_matches_coefficient_oracle(self, ns1):
        f = random_signal(ns1.grid, 81)
        for type_k in NIL_TYPES:
            coeffs = nilpotent_analyze(ns1, f, type_k)
            assert set(coeffs.data) == set(enumerate_nil_indices(ns1, type_k))
            for idx, c in coeffs.data.items():
                assert c == nil_coefficient(ns1, f, idx)

    def test_synthesize_reconstructs(self, ns1):
        f = random_signal(ns1.grid, 82)
        for type_k in NIL_TYPES:
            g = nilpotent_synthesize(ns1, nilpotent_analyze(ns1, f, type_k))
            assert g.equals(f.sub_mean())

    def test_parseval_per_type(self, ns1):
        f = random_signal(ns1.grid, 83)
        want = l2_norm_sq(f.sub_mean())
        for type_k in NIL_TYPES:
            assert nilpotent_analyze(ns1, f, type_k).energy() == want

    def test_thc1_roundtrip(self, ns1, tmp_path):
        f = random_signal(ns1.grid, 84)
        coeffs = nilpotent_analyze(ns1, f, 3)
        p = tmp_path / "nil.thc1"
        write_nil_thc1(ns1, coeffs, p)
        header, back = read_nil_thc1(p)
        assert int(header["type"]) == 3
        assert back.data == coeffs.data


class TestMartingale:
    def test_cond_expect_matches_direct(self, ns1):
        f = random_signal(ns1.grid, 85)
        levels = range(ns1.cell_scale, ns1.top_scale + 1)
        for type_k in NIL_TYPES:
            for j in product(levels, repeat=3):
                got = nilpotent_cond_expect(ns1, f, j, type_k)
                want = nilpotent_cond_expect_direct(ns1, f, j, type_k)
                assert got.equals(want), (type_k, j)

    def test_tower_property(self, ns2):
        f = random_signal(ns2.grid, 86)
        for type_k in NIL_TYPES:
            fine = nilpotent_cond_expect(ns2, f, (1, 1, 1), type_k)
            assert nilpotent_cond_expect(ns2, fine, (2, 2, 2), type_k).equals(
                nilpotent_cond_expect(ns2, f, (2, 2, 2), type_k))

    def test_diff_equals_haar_projection(self, ns2):
        f = random_signal(ns2.grid, 87)
        for type_k in NIL_TYPES:
            for j in ((1, 1, 1), (2, 1, 2), (1, 2, 1)):
                d = nilpotent_mart_diff(ns2, f, j, type_k)
                proj = nilpotent_synthesize(
                    ns2, nilpotent_analyze(ns2, f, type_k, triples=[j]))
                assert d.equals(proj), (type_k, j)

    def test_triple_telescoping(self, ns1):
        # sentinel-bearing triples are reachable through analysis only, so sum
        # the per-triple Haar projections over the whole extended family
        f = random_signal(ns1.grid, 88)
        for type_k in NIL_TYPES:
            acc = None
            for j in extended_triples(ns1):
                t = nilpotent_synthesize(
                    ns1, nilpotent_analyze(ns1, f, type_k, triples=[j]))
                acc = t if acc is None else acc + t
            assert acc.equals(f.sub_mean())

    def test_boundary_triple_rejected_by_diff(self, ns1):
        f = random_signal(ns1.grid, 90)
        with pytest.raises(ScaleError):
            nilpotent_mart_diff(ns1, f, (ns1.avg_level, 1, 1), 1)

    def test_scale_out_of_window_rejected(self, ns1):
        f = random_signal(ns1.grid, 89)
        with pytest.raises(ScaleError):
            nilpotent_mart_diff(ns1, f, (0, 1, 1), 1)


class TestFrameAndSquare:
    def test_tight_frame_bound_three(self, ns1):
        for seed in (91, 92):
            f = random_signal(ns1.grid, seed)
            rep = nilpotent_frame(ns1, f)
            assert rep.ratio == Fraction(3)
            assert rep.tight
            assert rep.reconstruction.equals(f.sub_mean())
            for e in rep.type_energies.values():
                assert e == rep.denominator

    def test_square_function_p2(self, ns1):
        f = random_signal(ns1.grid, 93)
        want = l2_norm_sq(f.sub_mean())
        for type_k in NIL_TYPES:
            sq = nilpotent_square_fn_sq(ns1, f, type_k)
            assert sq.total() == want
            dy = nilpotent_square_fn_dyadic_sq(ns1, f, type_k)
            assert dy.total() == want

    def test_type3_square_transfer(self, ns1):
        f = random_signal(ns1.grid, 94)
        sq3 = nilpotent_square_fn_sq(ns1, f, 3)
        sq2 = nilpotent_square_fn_sq(ns1, ns1.transport_adj(f, 3), 2)
        assert sq3.equals(ns1.transport(sq2, 3))


class TestComparability:
    def test_identical_regions_give_unit_constants(self, ns2):
        for type_k in (1, 2):
            sh = zero_shard(ns2, type_k, (1, 1, 1))
            region = analytic_fibered_region(ns2, sh)
            assert comparability_check(ns2, region, sh) == (1, 1)

    def test_gate_rejects_wild_scale_mismatch(self):
        # three scale steps make the spatial side ratio 8, past the gate at 4
        ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=3)
        region = analytic_fibered_region(ns, zero_shard(ns, 1, (3, 3, 3)))
        with pytest.raises(ScaleError):
            comparability_check(ns, region, zero_shard(ns, 1, (0, 0, 0)))


class TestRegimes:
    def test_bad_window_rejected(self):
        with pytest.raises(Exception):
            NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=2, top_scale=1)

    def test_type_checked(self, ns1):
        f = random_signal(ns1.grid, 95)
        with pytest.raises(DimensionMismatch):
            nilpotent_cond_expect(ns1, f, (1, 1, 1), 4)
