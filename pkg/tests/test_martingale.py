"""Bi-parameter martingale structure: expectations, differences, square functions."""

import math
from itertools import product

import pytest

from twistedhaar import (
    DyadicRational as DR,
    ScaleRange,
    analyze,
    inner_product,
    l2_norm_sq,
    lp_norm,
    lp_ratio_report,
    mart_diff,
    p2_identity,
    random_signal,
    square_fn_dyadic_sq,
    square_fn_mart,
    square_fn_mart_sq,
    synthesize,
)
from twistedhaar.errors import ScaleError
from twistedhaar.martingale import SYSTEMS, cond_expect, cond_expect_direct, level_diff


def ext_levels(sys_):
    return [sys_.avg_level] + list(range(sys_.k_min, sys_.k_max + 1))


def reg_levels(sys_):
    return list(range(sys_.k_min, sys_.k_max + 1))


def corner_term(sys_, f, ls, system):
    """Martingale increment at an extended pair via conditional expectations.

    Expanding the per-parameter blocks D_sent = E_sent and D_k = E_(k+1) - E_k
    gives a four-corner (or two-corner) combination of cond_expect values;
    this reconstructs every term of the square function from public pieces.
    """
    l1, l2 = ls
    sent = sys_.avg_level

    def ee(a, b):
        return cond_expect(sys_, f, (a, b), system)

    if l1 == sent and l2 == sent:
        raise AssertionError("excluded combination")
    if l1 == sent:
        return ee(sent, l2 + 1) - ee(sent, l2)
    if l2 == sent:
        return ee(l1 + 1, sent) - ee(l1, sent)
    return (ee(l1 + 1, l2 + 1) - ee(l1 + 1, l2)
            - ee(l1, l2 + 1) + ee(l1, l2))


class TestCondExpect:
    def test_matches_direct_oracle(self, sys2):
        f = random_signal(sys2.grid, 51)
        for i in SYSTEMS:
            for ks in product(ext_levels(sys2), repeat=2):
                got = cond_expect(sys2, f, ks, i)
                want = cond_expect_direct(sys2, f, ks, i)
                assert got.equals(want), (i, ks)

    def test_tower_property(self, sys2):
        f = random_signal(sys2.grid, 52)
        for i in SYSTEMS:
            fine = cond_expect(sys2, f, (1, 1), i)
            assert cond_expect(sys2, fine, (0, 0), i).equals(
                cond_expect(sys2, f, (0, 0), i))

    def test_projection_idempotent(self, sys2):
        f = random_signal(sys2.grid, 53)
        for i in SYSTEMS:
            e = cond_expect(sys2, f, (0, 1), i)
            assert cond_expect(sys2, e, (0, 1), i).equals(e)

    def test_contractive_in_l2(self, sys2):
        f = random_signal(sys2.grid, 54)
        for i in SYSTEMS:
            e = cond_expect(sys2, f, (0, 0), i)
            assert l2_norm_sq(e) <= l2_norm_sq(f)

    def test_preserves_total(self, sys2):
        f = random_signal(sys2.grid, 55)
        for i in SYSTEMS:
            assert cond_expect(sys2, f, (0, 1), i).total() == f.total()

    def test_cell_level_is_identity(self, sys2):
        f = random_signal(sys2.grid, 56)
        cell = sys2.res_exp
        assert cond_expect(sys2, f, (cell, cell), 1).equals(f)
        with pytest.raises(ScaleError):
            cond_expect(sys2, f, (cell + 1, cell), 1)


class TestMartDiff:
    def test_equals_scale_projection(self, sys2):
        f = random_signal(sys2.grid, 61)
        for i in SYSTEMS:
            for k1, k2 in product(reg_levels(sys2), repeat=2):
                d = mart_diff(sys2, f, (k1, k2), i)
                proj = synthesize(sys2, analyze(sys2, f, i,
                                                ScaleRange(k1, k1, k2, k2)))
                assert d.equals(proj), (i, k1, k2)

    def test_increments_orthogonal(self, sys2):
        f = random_signal(sys2.grid, 62)
        pairs = list(product(reg_levels(sys2), repeat=2))
        diffs = [mart_diff(sys2, f, ks, 2) for ks in pairs]
        for a in range(len(diffs)):
            for b in range(a + 1, len(diffs)):
                assert inner_product(diffs[a], diffs[b]).is_zero

    def test_level_diff_telescopes_to_identity(self, sys2):
        f = random_signal(sys2.grid, 63)
        for param in (1, 2):
            acc = None
            for lv in ext_levels(sys2):
                d = level_diff(sys2, f, param, lv)
                acc = d if acc is None else acc + d
            # boundary average plus all increments resolves f completely
            assert acc.equals(f)

    def test_full_telescoping_recovers_mean_zero(self, sys2):
        f = random_signal(sys2.grid, 65)
        for i in SYSTEMS:
            acc = None
            for l1 in ext_levels(sys2):
                for l2 in ext_levels(sys2):
                    if l1 == sys2.avg_level and l2 == sys2.avg_level:
                        continue
                    t = corner_term(sys2, f, (l1, l2), i)
                    acc = t if acc is None else acc + t
            assert acc.equals(f.sub_mean())

    def test_sentinel_rejected(self, sys2):
        f = random_signal(sys2.grid, 64)
        with pytest.raises(ScaleError):
            mart_diff(sys2, f, (sys2.avg_level, 0), 1)


class TestSquareFunction:
    def test_p2_identity_exact(self, sys3):
        f = random_signal(sys3.grid, 71)
        for i in SYSTEMS:
            lhs, rhs = p2_identity(sys3, f, i)
            assert lhs == rhs
            assert rhs == l2_norm_sq(f.sub_mean())

    def test_square_equals_sum_over_extended_pairs(self, sys2):
        f = random_signal(sys2.grid, 72)
        for i in SYSTEMS:
            acc = None
            for ls in product(ext_levels(sys2), repeat=2):
                if ls == (sys2.avg_level, sys2.avg_level):
                    continue
                term = corner_term(sys2, f, ls, i).pointwise_sq()
                acc = term if acc is None else acc + term
            assert square_fn_mart_sq(sys2, f, i).equals(acc)

    def test_regular_terms_match_mart_diff(self, sys2):
        f = random_signal(sys2.grid, 76)
        for i in SYSTEMS:
            for ks in product(reg_levels(sys2), repeat=2):
                assert mart_diff(sys2, f, ks, i).equals(
                    corner_term(sys2, f, ks, i))

    def test_dyadic_route_same_integral(self, sys2):
        f = random_signal(sys2.grid, 73)
        for i in SYSTEMS:
            a = square_fn_mart_sq(sys2, f, i)
            b = square_fn_dyadic_sq(sys2, f, i)
            assert a.total() == b.total()
            # at m = 1 each scale block holds a single element, so the two
            # square functions agree cellwise, not just on integrals
            assert a.equals(b)

    def test_intertwining_cellwise(self, sys2):
        f = random_signal(sys2.grid, 74)
        for i in (2, 3):
            base = square_fn_mart_sq(sys2, sys2.transport_adj(f, i), 1)
            assert square_fn_mart_sq(sys2, f, i).equals(sys2.transport(base, i))

    def test_lp_transfer(self, sys3):
        f = random_signal(sys3.grid, 75)
        for i in (2, 3):
            s_i = square_fn_mart(sys3, f, i)
            s_1 = square_fn_mart(sys3, sys3.transport_adj(f, i), 1)
            for p in (1.5, 2.0, 3.0, 4.0):
                a, b = lp_norm(s_i, p), lp_norm(s_1, p)
                assert math.isclose(a, b, rel_tol=1e-12)


class TestLpReport:
    def test_report_shape_and_positivity(self, sys2):
        rep = lp_ratio_report(sys2, ps=(1.5, 3.0), trials=5, seed=3)
        assert len(rep.rows) == 3 * 2 * 5
        for _sys, _p, _trial, ratio in rep.rows:
            assert ratio > 0 and math.isfinite(ratio)
        assert rep.transfer_max_dev <= 1e-10

    def test_p2_rows_are_unity(self, sys2):
        rep = lp_ratio_report(sys2, ps=(2.0,), trials=5, seed=4)
        for _sys, _p, _trial, ratio in rep.rows:
            assert abs(ratio - 1.0) < 1e-9

    def test_brackets_cover_rows(self, sys2):
        rep = lp_ratio_report(sys2, ps=(1.5,), trials=4, seed=5)
        for (system, p), (lo, hi) in rep.brackets.items():
            rows = [r for s, pp, _t, r in rep.rows if s == system and pp == p]
            assert lo == min(rows) and hi == max(rows)

    def test_csv_header(self, sys2):
        rep = lp_ratio_report(sys2, ps=(2.0,), trials=1, seed=6)
        lines = rep.csv_lines()
        assert lines[0] == "system,p,trial,ratio"
        assert len(lines) == 1 + len(rep.rows)

    def test_deterministic(self, sys2):
        a = lp_ratio_report(sys2, ps=(1.5,), trials=3, seed=7)
        b = lp_ratio_report(sys2, ps=(1.5,), trials=3, seed=7)
        assert a.rows == b.rows
