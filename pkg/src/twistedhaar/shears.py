"""Integer shear maps on torus grids and their unitary pullbacks.

A shear is an integer matrix M with det M = 1 acting on coordinates,
x -> M x reduced modulo the per-axis extents.  Because the matrix is integral
and unimodular, and because it only ever mixes axes of equal resolution, it
permutes grid cells; the pullback (U f)(x) = f(M x) is then an exact
permutation of cell values, hence a unitary on signals in every L^p sense.

Built-in kinds:

* ``T2``: on 2m axes, (x1, x2) -> (x1 - x2, x2) blockwise,
* ``T3``: (x1, x2) -> (x1, x2 - x1),
* ``Theta``: identity except (t1, t2) -> (t1 - t2, t2) on the last two axes,
* ``Identity``, and ``Custom`` from an explicit matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicRational as DR
from .errors import DimensionMismatch, IncompatibleGrid, NotUnimodular
from .grid import GridSignal, TorusGrid

KINDS = ("T2", "T3", "Theta", "Identity", "Custom")


def _det_bareiss(mat: list[list[int]]) -> int:
    """Exact integer determinant (fraction-free elimination)."""
    n = len(mat)
    a = [row[:] for row in mat]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _inverse_unimodular(mat: list[list[int]]) -> list[list[int]]:
    """Exact inverse of an integer matrix with det +-1 (adjugate method)."""
    n = len(mat)
    det = _det_bareiss(mat)
    if det not in (1, -1):
        raise NotUnimodular(f"determinant {det}")
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[mat[r][c] for c in range(n) if c != j]
                     for r in range(n) if r != i]
            cof = _det_bareiss(minor) if minor else 1
            adj[j][i] = ((-1) ** (i + j)) * cof * det
    return adj


@dataclass(frozen=True)
class ShearMap:
    kind: str
    matrix: tuple[tuple[int, ...], ...]
    grid: TorusGrid

    def __post_init__(self):
        n = self.grid.ndim
        if len(self.matrix) != n or any(len(r) != n for r in self.matrix):
            raise DimensionMismatch(
                f"matrix is {len(self.matrix)}x?, grid has {n} axes")
        det = _det_bareiss([list(r) for r in self.matrix])
        if det != 1:
            raise NotUnimodular(f"shear determinant must be 1, got {det}")
        # off-diagonal mixing requires matching cell widths, or the image of a
        # cell corner is not a cell corner
        for a in range(n):
            for b in range(n):
                if a != b and self.matrix[a][b] != 0:
                    if self.grid.axes[a].res_exp != self.grid.axes[b].res_exp:
                        raise IncompatibleGrid(
                            f"axes {a},{b} mixed by the shear have unequal resolution")

    def inverse(self) -> "ShearMap":
        inv = _inverse_unimodular([list(r) for r in self.matrix])
        return ShearMap("Custom", tuple(tuple(r) for r in inv), self.grid)


def _block_matrix(m: int, kind: str) -> list[list[int]]:
    n = 2 * m
    mat = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    for a in range(m):
        if kind == "T2":
            mat[a][m + a] = -1          # x1 - x2
        else:
            mat[m + a][a] = -1          # x2 - x1
    return mat


def make_shear(kind: str, grid: TorusGrid, matrix=None) -> ShearMap:
    if kind not in KINDS:
        raise ValueError(f"unknown shear kind {kind!r}")
    n = grid.ndim
    if kind == "Identity":
        mat = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    elif kind in ("T2", "T3"):
        if n % 2:
            raise DimensionMismatch("T2/T3 need an even number of axes")
        m = n // 2
        for a in range(m):
            if grid.axes[a] != grid.axes[m + a]:
                raise IncompatibleGrid(
                    f"axes {a} and {m + a} must match for {kind}")
        mat = _block_matrix(m, kind)
    elif kind == "Theta":
        if n < 2:
            raise DimensionMismatch("Theta needs at least two axes")
        if grid.axes[-1] != grid.axes[-2]:
            raise IncompatibleGrid("the two central axes must match for Theta")
        mat = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
        mat[n - 2][n - 1] = -1          # t1 - t2
    else:
        if matrix is None:
            raise ValueError("Custom shear needs an explicit matrix")
        mat = [list(map(int, r)) for r in matrix]
    return ShearMap(kind, tuple(tuple(r) for r in mat), grid)


def apply(shear: ShearMap, point) -> tuple[DR, ...]:
    """Image of an exact point under the shear, reduced into the torus."""
    grid = shear.grid
    if len(point) != grid.ndim:
        raise DimensionMismatch(f"point has {len(point)} coordinates")
    pt = [x if isinstance(x, DR) else DR.from_int(int(x)) for x in point]
    out = []
    for a in range(grid.ndim):
        acc = DR.zero()
        for b, coeff in enumerate(shear.matrix[a]):
            if coeff:
                acc = acc + pt[b] * coeff
        out.append(acc.mod_pow2(grid.axes[a].extent_exp))
    return tuple(out)


class PullbackOperator:
    """Unitary composition with a shear: (U f)(cell) = f(shear(cell))."""

    __slots__ = ("shear", "grid", "perm")

    def __init__(self, shear: ShearMap):
        self.shear = shear
        self.grid = shear.grid
        self.perm = _cell_permutation(shear)

    def __call__(self, f: GridSignal) -> GridSignal:
        return pullback(self, f)

    def adjoint(self) -> "PullbackOperator":
        return PullbackOperator(self.shear.inverse())


def _cell_permutation(shear: ShearMap) -> np.ndarray:
    grid = shear.grid
    shape = grid.shape
    idx = [arr.astype(np.int64) for arr in np.indices(shape)]
    new_axes = []
    for a in range(grid.ndim):
        acc = np.zeros(shape, dtype=np.int64)
        res_a = grid.axes[a].res_exp
        for b, coeff in enumerate(shear.matrix[a]):
            if coeff == 0:
                continue
            shift = res_a - grid.axes[b].res_exp
            term = idx[b] * coeff
            # coordinate i_b * 2^-K_b in cells of width 2^-K_a
            if shift > 0:
                term = term << shift
            elif shift < 0:
                raise IncompatibleGrid("finer axis mapped onto coarser axis")
            acc += term
        new_axes.append(np.mod(acc, shape[a]))
    flat = np.ravel_multi_index([ax.reshape(-1) for ax in new_axes], shape)
    return flat.astype(np.int64)


def pullback(op: PullbackOperator, f: GridSignal) -> GridSignal:
    if f.grid != op.grid:
        raise DimensionMismatch("signal grid does not match the operator grid")
    return f.take(op.perm)


@dataclass(frozen=True)
class UnimodularReport:
    determinant: int
    bijective: bool
    tested_shape: tuple[int, ...]


def verify_unimodular(matrix_or_shear, grid: TorusGrid | None = None) -> UnimodularReport:
    """Determinant plus a brute-force bijectivity certificate on a small grid."""
    if isinstance(matrix_or_shear, ShearMap):
        mat = [list(r) for r in matrix_or_shear.matrix]
        grid = matrix_or_shear.grid
    else:
        mat = [list(map(int, r)) for r in matrix_or_shear]
        if grid is None:
            from .grid import make_grid
            grid = make_grid([(0, 2)] * len(mat))
    det = _det_bareiss(mat)
    shape = grid.shape
    idx = [arr.astype(np.int64) for arr in np.indices(shape)]
    new_axes = []
    for a in range(grid.ndim):
        acc = np.zeros(shape, dtype=np.int64)
        for b, coeff in enumerate(mat[a]):
            if coeff:
                shift = grid.axes[a].res_exp - grid.axes[b].res_exp
                term = idx[b] * coeff
                if shift > 0:
                    term = term << shift
                elif shift < 0:
                    term = term  # inexact embedding; certificate will catch collisions
                acc += term
        new_axes.append(np.mod(acc, shape[a]))
    flat = np.ravel_multi_index([ax.reshape(-1) for ax in new_axes], shape)
    bijective = len(np.unique(flat)) == grid.ncells
    return UnimodularReport(det, bool(bijective), shape)
