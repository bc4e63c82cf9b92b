"""Unimodular shears: determinants, cell permutations, unitarity."""

import numpy as np
import pytest

from twistedhaar import (
    DyadicRational as DR,
    GridSignal,
    NilSystem,
    PullbackOperator,
    inner_product,
    l2_norm_sq,
    make_grid,
    make_shear,
    random_signal,
    verify_unimodular,
)
from twistedhaar.errors import IncompatibleGrid, NotUnimodular
from twistedhaar.shears import apply


@pytest.fixture(scope="module")
def g2d():
    return make_grid([(0, 3), (0, 3)])


class TestConstruction:
    def test_builtin_kinds_unimodular(self, g2d):
        for kind in ("T2", "T3", "Identity"):
            rep = verify_unimodular(make_shear(kind, g2d))
            assert rep.determinant == 1
            assert rep.bijective
            assert rep.tested_shape == g2d.shape

    def test_theta_on_nil_grid(self):
        grid = NilSystem().grid
        rep = verify_unimodular(make_shear("Theta", grid))
        assert rep.determinant == 1
        assert rep.bijective

    def test_custom_rejects_det_not_one(self, g2d):
        with pytest.raises(NotUnimodular):
            make_shear("Custom", g2d, [[2, 0], [0, 1]])
        with pytest.raises(NotUnimodular):
            make_shear("Custom", g2d, [[0, 1], [1, 0]])     # det -1

    def test_mixed_resolution_rejected(self):
        grid = make_grid([(0, 2), (0, 3)])
        with pytest.raises(IncompatibleGrid):
            make_shear("Custom", grid, [[1, 1], [0, 1]])

    def test_inverse_is_exact(self, g2d):
        sh = make_shear("T2", g2d)
        inv = sh.inverse()
        m = np.array(sh.matrix) @ np.array(inv.matrix)
        assert np.array_equal(m, np.eye(2, dtype=int))


class TestPullback:
    def test_identity_is_noop(self, g2d):
        op = PullbackOperator(make_shear("Identity", g2d))
        f = random_signal(g2d, 0)
        assert op(f).equals(f)

    def test_adjoint_round_trip(self, g2d):
        for kind in ("T2", "T3"):
            op = PullbackOperator(make_shear(kind, g2d))
            f = random_signal(g2d, 1)
            assert op.adjoint()(op(f)).equals(f)
            assert op(op.adjoint()(f)).equals(f)

    def test_exact_isometry(self, g2d):
        op = PullbackOperator(make_shear("T3", g2d))
        f = random_signal(g2d, 2)
        g = random_signal(g2d, 3)
        assert l2_norm_sq(op(f)) == l2_norm_sq(f)
        assert inner_product(op(f), op(g)) == inner_product(f, g)

    def test_composition_matches_matrix_product(self, g2d):
        # (U_M U_N f)(x) = f(N M x), so composition pulls back along N @ M
        m_mat = np.array(make_shear("T2", g2d).matrix)
        n_mat = np.array(make_shear("T3", g2d).matrix)
        u_m = PullbackOperator(make_shear("T2", g2d))
        u_n = PullbackOperator(make_shear("T3", g2d))
        u_nm = PullbackOperator(make_shear("Custom", g2d, (n_mat @ m_mat).tolist()))
        f = random_signal(g2d, 4)
        assert u_m(u_n(f)).equals(u_nm(f))

    def test_permutation_matches_point_map(self):
        grid = make_grid([(0, 2), (0, 2)])
        sh = make_shear("T2", grid)
        op = PullbackOperator(sh)
        for flat in range(grid.ncells):
            multi = grid.multi_index(flat)
            image = apply(sh, grid.cell_origin(multi))
            assert grid.flat_index(grid.cell_of_point(image)) == op.perm[flat]

    def test_theta_touches_only_central_axes(self):
        ns = NilSystem()
        op = ns.pull(3)
        f = random_signal(ns.grid, 5)
        g = op(f)
        # averaging out the central axes must commute with Theta
        group = {ax: ns.grid.axes[ax].extent_exp + ns.grid.axes[ax].res_exp
                 for ax in (3, 4)}
        assert f.average_groups(group).equals(g.average_groups(group))


class TestApply:
    def test_t2_point_image(self, g2d):
        sh = make_shear("T2", g2d)
        pt = (DR(3, -3), DR(1, -3))
        out = apply(sh, pt)
        assert out == (DR(2, -3), DR(1, -3))       # x1 - x2 mod 1

    def test_wraps_mod_extent(self, g2d):
        sh = make_shear("T2", g2d)
        out = apply(sh, (DR.zero(), DR(1, -3)))
        assert out == (DR(7, -3), DR(1, -3))
