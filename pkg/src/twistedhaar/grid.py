"""Finite dyadic torus grids and dense piecewise-constant signals.

An axis with extent exponent L and resolution exponent K models the circle
[0, 2^L) split into 2^(L+K) half-open cells of width 2^-K.  A grid is a product
of such axes; a signal assigns one value per cell and is constant on it.

Exact-mode signals store two integer mantissa arrays with shared exponents:
value(cell) = a[cell]*2^ea + b[cell]*2^eb*sqrt(2).  The arrays hold Python ints
(numpy object dtype), so sums and products are exact at any size.  Operations
never mutate; every method returns a fresh signal.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .dyadic import DyadicRational as DR
from .errors import ExactnessError, GridMismatch, InvalidExponent, InvalidGrid

MAX_CELLS = 1 << 24

EXACT = "exact"
FLOAT = "float"


@dataclass(frozen=True)
class AxisSpec:
    extent_exp: int   # domain [0, 2^extent_exp)
    res_exp: int      # cell width 2^-res_exp

    @property
    def cells(self) -> int:
        return 1 << (self.extent_exp + self.res_exp)


@dataclass(frozen=True)
class TorusGrid:
    axes: tuple[AxisSpec, ...]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.cells for ax in self.axes)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape, dtype=object))

    @property
    def cell_volume_exp(self) -> int:
        return -sum(ax.res_exp for ax in self.axes)

    @property
    def cell_volume(self) -> DR:
        return DR.pow2(self.cell_volume_exp)

    def axis_origin(self, axis: int, i: int) -> DR:
        return DR(i, -self.axes[axis].res_exp)

    def cell_origin(self, multi: Sequence[int]) -> tuple[DR, ...]:
        return tuple(self.axis_origin(a, i) for a, i in enumerate(multi))

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(flat, self.shape))

    def cell_of_point(self, point: Sequence[DR]) -> tuple[int, ...]:
        if len(point) != self.ndim:
            raise GridMismatch(f"point has {len(point)} coordinates, grid has {self.ndim}")
        out = []
        for ax, x in zip(self.axes, point):
            i = x.mod_pow2(ax.extent_exp).floor_shifted(ax.res_exp)
            out.append(int(i))
        return tuple(out)


def make_grid(axes: Iterable[AxisSpec | tuple[int, int]], max_cells: int = MAX_CELLS) -> TorusGrid:
    specs = []
    for ax in axes:
        if not isinstance(ax, AxisSpec):
            ax = AxisSpec(int(ax[0]), int(ax[1]))
        if ax.extent_exp + ax.res_exp < 0:
            raise InvalidGrid(f"axis {ax} has fewer than one cell")
        specs.append(ax)
    if not specs:
        raise InvalidGrid("a grid needs at least one axis")
    grid = TorusGrid(tuple(specs))
    if grid.ncells > max_cells:
        raise InvalidGrid(f"grid has {grid.ncells} cells, cap is {max_cells}")
    return grid


def parse_axes(text: str) -> list[AxisSpec]:
    """Parse 'L,K;L,K;...' into axis specs (the TGS1 header grammar)."""
    out = []
    for part in text.strip().split(";"):
        l, k = part.split(",")
        out.append(AxisSpec(int(l), int(k)))
    return out


def format_axes(axes: Sequence[AxisSpec]) -> str:
    return ";".join(f"{ax.extent_exp},{ax.res_exp}" for ax in axes)


def _obj_zeros(n: int) -> np.ndarray:
    a = np.empty(n, dtype=object)
    a[:] = 0
    return a


class GridSignal:
    """Dense per-cell values on a torus grid, exact or float mode."""

    __slots__ = ("grid", "mode", "_a", "_ea", "_b", "_eb")

    def __init__(self, grid: TorusGrid, mode: str, a, ea: int = 0, b=None, eb: int = 0):
        self.grid = grid
        self.mode = mode
        if mode == FLOAT:
            arr = np.asarray(a, dtype=np.float64).reshape(grid.ncells).copy()
            arr.setflags(write=False)
            self._a, self._ea, self._b, self._eb = arr, 0, None, 0
        elif mode == EXACT:
            arr = np.asarray(a, dtype=object).reshape(grid.ncells).copy()
            arr.setflags(write=False)
            self._a, self._ea = arr, int(ea)
            self._b, self._eb = None, 0
            if b is not None:
                brr = np.asarray(b, dtype=object).reshape(grid.ncells)
                if any(v != 0 for v in brr):
                    brr = brr.copy()
                    brr.setflags(write=False)
                    self._b, self._eb = brr, int(eb)
        else:
            raise GridMismatch(f"unknown mode {mode!r}")

    # ---- constructors ----

    @classmethod
    def zeros(cls, grid: TorusGrid, mode: str = EXACT) -> "GridSignal":
        if mode == FLOAT:
            return cls(grid, FLOAT, np.zeros(grid.ncells))
        return cls(grid, EXACT, _obj_zeros(grid.ncells), 0)

    @classmethod
    def constant(cls, grid: TorusGrid, value: DR | int | float, mode: str = EXACT) -> "GridSignal":
        if mode == FLOAT:
            v = float(value) if not isinstance(value, DR) else value.to_float()
            return cls(grid, FLOAT, np.full(grid.ncells, v))
        v = value if isinstance(value, DR) else DR.from_int(int(value))
        a = _obj_zeros(grid.ncells)
        a[:] = v.mantissa
        if v.root_mantissa:
            b = _obj_zeros(grid.ncells)
            b[:] = v.root_mantissa
            return cls(grid, EXACT, a, v.exponent, b, v.root_exponent)
        return cls(grid, EXACT, a, v.exponent)

    @classmethod
    def from_values(cls, grid: TorusGrid, values: Sequence[DR | int]) -> "GridSignal":
        vals = [v if isinstance(v, DR) else DR.from_int(int(v)) for v in values]
        if len(vals) != grid.ncells:
            raise GridMismatch(f"{len(vals)} values for {grid.ncells} cells")
        ea = min((v.exponent for v in vals if v.mantissa), default=0)
        a = _obj_zeros(grid.ncells)
        for i, v in enumerate(vals):
            a[i] = v.mantissa << (v.exponent - ea) if v.mantissa else 0
        if any(v.root_mantissa for v in vals):
            eb = min(v.root_exponent for v in vals if v.root_mantissa)
            b = _obj_zeros(grid.ncells)
            for i, v in enumerate(vals):
                b[i] = v.root_mantissa << (v.root_exponent - eb) if v.root_mantissa else 0
            return cls(grid, EXACT, a, ea, b, eb)
        return cls(grid, EXACT, a, ea)

    @classmethod
    def from_floats(cls, grid: TorusGrid, values) -> "GridSignal":
        return cls(grid, FLOAT, np.asarray(values, dtype=np.float64))

    # ---- access ----

    def value_at(self, flat: int) -> DR | float:
        if self.mode == FLOAT:
            return float(self._a[flat])
        out = DR(self._a[flat], self._ea)
        if self._b is not None:
            out = out + DR(0, 0, self._b[flat], self._eb)
        return out

    def values(self) -> list:
        return [self.value_at(i) for i in range(self.grid.ncells)]

    def to_float_array(self) -> np.ndarray:
        if self.mode == FLOAT:
            return self._a.copy()
        scale = math.ldexp(1.0, self._ea) if -1000 < self._ea < 1000 else 2.0 ** self._ea
        out = self._a.astype(np.float64) * scale
        if self._b is not None:
            sb = math.ldexp(1.0, self._eb) if -1000 < self._eb < 1000 else 2.0 ** self._eb
            out = out + self._b.astype(np.float64) * sb * math.sqrt(2.0)
        return out

    def to_float_signal(self) -> "GridSignal":
        return GridSignal(self.grid, FLOAT, self.to_float_array())

    def components(self):
        """Internal exact representation (read-only arrays)."""
        return self._a, self._ea, self._b, self._eb

    # ---- algebra ----

    def _check(self, other: "GridSignal"):
        if self.grid != other.grid:
            raise GridMismatch("signals live on different grids")
        if self.mode != other.mode:
            raise GridMismatch(f"mixed numeric modes {self.mode}/{other.mode}")

    def __add__(self, other: "GridSignal") -> "GridSignal":
        self._check(other)
        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, self._a + other._a)
        a, ea = _aligned_add(self._a, self._ea, other._a, other._ea)
        b, eb = _aligned_add_opt(self._b, self._eb, other._b, other._eb)
        return GridSignal(self.grid, EXACT, a, ea, b, eb)

    def __sub__(self, other: "GridSignal") -> "GridSignal":
        return self + other.__neg__()

    def __neg__(self) -> "GridSignal":
        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, -self._a)
        b = None if self._b is None else -self._b
        return GridSignal(self.grid, EXACT, -self._a, self._ea, b, self._eb)

    def scale(self, c: DR | int | float) -> "GridSignal":
        if self.mode == FLOAT:
            cf = c.to_float() if isinstance(c, DR) else float(c)
            return GridSignal(self.grid, FLOAT, self._a * cf)
        c = c if isinstance(c, DR) else DR.from_int(int(c))
        # (a + b r)(ca + cb r) with r^2 = 2, done on whole arrays
        a1, e1, b1, f1 = self._a, self._ea, self._b, self._eb
        terms_a = []
        if c.mantissa:
            terms_a.append((a1 * c.mantissa, e1 + c.exponent))
        terms_b = []
        if c.root_mantissa:
            terms_b.append((a1 * c.root_mantissa, e1 + c.root_exponent))
        if b1 is not None:
            if c.root_mantissa:
                terms_a.append((b1 * (2 * c.root_mantissa), f1 + c.root_exponent))
            if c.mantissa:
                terms_b.append((b1 * c.mantissa, f1 + c.exponent))
        a, ea = _sum_terms(terms_a, self.grid.ncells)
        b, eb = _sum_terms(terms_b, self.grid.ncells) if terms_b else (None, 0)
        return GridSignal(self.grid, EXACT, a, ea, b, eb)

    def pointwise_mul(self, other: "GridSignal") -> "GridSignal":
        self._check(other)
        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, self._a * other._a)
        a1, e1, b1, f1 = self.components()
        a2, e2, b2, f2 = other.components()
        terms_a = [(a1 * a2, e1 + e2)]
        terms_b = []
        if b1 is not None and b2 is not None:
            terms_a.append((2 * b1 * b2, f1 + f2))
        if b2 is not None:
            terms_b.append((a1 * b2, e1 + f2))
        if b1 is not None:
            terms_b.append((b1 * a2, f1 + e2))
        a, ea = _sum_terms(terms_a, self.grid.ncells)
        b, eb = _sum_terms(terms_b, self.grid.ncells) if terms_b else (None, 0)
        return GridSignal(self.grid, EXACT, a, ea, b, eb)

    def pointwise_sq(self) -> "GridSignal":
        return self.pointwise_mul(self)

    def total(self) -> DR | float:
        """Sum of cell values times cell volume (the integral)."""
        if self.mode == FLOAT:
            return float(self._a.sum()) * 2.0 ** self.grid.cell_volume_exp
        ve = self.grid.cell_volume_exp
        out = DR(int(self._a.sum()), self._ea + ve)
        if self._b is not None:
            out = out + DR(0, 0, int(self._b.sum()), self._eb + ve)
        return out

    def mean(self) -> DR | float:
        vol_exp = sum(ax.extent_exp for ax in self.grid.axes)
        if self.mode == FLOAT:
            return self.total() / 2.0 ** vol_exp
        return self.total().mul_pow2(-vol_exp)

    def sub_mean(self) -> "GridSignal":
        return self - GridSignal.constant(self.grid, self.mean(), self.mode)

    def take(self, perm: np.ndarray) -> "GridSignal":
        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, self._a[perm])
        b = None if self._b is None else self._b[perm]
        return GridSignal(self.grid, EXACT, self._a[perm], self._ea, b, self._eb)

    def equals(self, other: "GridSignal") -> bool:
        self._check(other)
        if self.mode == FLOAT:
            return bool(np.array_equal(self._a, other._a))
        d = self - other
        if any(v != 0 for v in d._a):
            return False
        return d._b is None or not any(v != 0 for v in d._b)

    def divide_exact(self, n: int) -> "GridSignal":
        """Divide every value by the integer n, raising unless exact."""
        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, self._a / n)

        def run(arr):
            out = np.empty_like(arr)
            for i, v in enumerate(arr.flat):
                q, r = divmod(int(v), n)
                if r:
                    raise ExactnessError(f"value {v} is not divisible by {n}")
                out.flat[i] = q
            return out

        b = None if self._b is None else run(self._b)
        return GridSignal(self.grid, EXACT, run(self._a), self._ea, b, self._eb)

    def is_zero(self) -> bool:
        return self.equals(GridSignal.zeros(self.grid, self.mode))

    # ---- block averaging (the martingale workhorse) ----

    def average_groups(self, group_exps: dict[int, int]) -> "GridSignal":
        """Average over blocks of 2^s consecutive cells along each given axis.

        group_exps maps axis -> s.  Averages commute across axes; the division
        by the block size is an exponent shift, so exact mode stays exact.
        """
        shape = self.grid.shape
        total_shift = 0

        def run(arr):
            nonlocal total_shift
            work = arr.reshape(shape)
            for axis, s in group_exps.items():
                if s == 0:
                    continue
                g = 1 << s
                n = shape[axis]
                if n % g:
                    raise GridMismatch(f"axis {axis}: {n} cells not divisible by 2^{s}")
                moved = np.moveaxis(work, axis, -1)
                lead = moved.shape[:-1]
                sums = moved.reshape(lead + (n // g, g)).sum(axis=-1)
                work = np.moveaxis(
                    np.repeat(sums, g, axis=-1).reshape(lead + (n,)), -1, axis)
            return work.reshape(self.grid.ncells)

        if self.mode == FLOAT:
            shift = sum(group_exps.values())
            return GridSignal(self.grid, FLOAT, run(self._a) / (1 << shift))
        shift = sum(group_exps.values())
        a = run(self._a)
        b = None if self._b is None else run(self._b)
        return GridSignal(self.grid, EXACT, a, self._ea - shift, b, self._eb - shift)

    def average_atoms(self, atom_ids: np.ndarray) -> "GridSignal":
        """Average within arbitrary equal-size atoms (independent slow path)."""
        n = self.grid.ncells
        order = np.argsort(atom_ids, kind="stable")
        sorted_ids = atom_ids[order]
        starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
        sizes = np.diff(np.r_[starts, n])
        if len(set(sizes.tolist())) != 1:
            raise GridMismatch("atoms of unequal size")
        size = int(sizes[0])
        s = size.bit_length() - 1
        if (1 << s) != size:
            raise GridMismatch("atom size is not a power of two")

        def run(arr):
            out = np.empty(n, dtype=arr.dtype)
            acc = np.add.reduceat(arr[order], starts)
            for j, st in enumerate(starts):
                out[order[st:st + size]] = acc[j]
            return out

        if self.mode == FLOAT:
            return GridSignal(self.grid, FLOAT, run(self._a) / size)
        a = run(self._a)
        b = None if self._b is None else run(self._b)
        return GridSignal(self.grid, EXACT, a, self._ea - s, b, self._eb - s)


def _aligned_add(a1, e1, a2, e2):
    e = min(e1, e2)
    x = a1 * (1 << (e1 - e)) if e1 != e else a1
    y = a2 * (1 << (e2 - e)) if e2 != e else a2
    return x + y, e


def _aligned_add_opt(b1, e1, b2, e2):
    if b1 is None and b2 is None:
        return None, 0
    if b1 is None:
        return b2.copy(), e2
    if b2 is None:
        return b1.copy(), e1
    return _aligned_add(b1, e1, b2, e2)


def _sum_terms(terms, ncells):
    if not terms:
        return _obj_zeros(ncells), 0
    acc, e = terms[0]
    for arr, ea in terms[1:]:
        acc, e = _aligned_add(acc, e, arr, ea)
    return acc, e


# ---- inner products and norms ----

def inner_product(f: GridSignal, g: GridSignal) -> DR | float:
    """Integral of f*g over the torus, exact in exact mode."""
    f._check(g)
    return f.pointwise_mul(g).total()


def l2_norm_sq(f: GridSignal) -> DR | float:
    return inner_product(f, f)


def lp_norm(f: GridSignal, p) -> float:
    """L^p norm as a float; p in [1, inf] ('inf' accepted)."""
    if isinstance(p, str):
        if p not in ("inf", "infinity"):
            raise InvalidExponent(f"bad exponent {p!r}")
        p = math.inf
    p = float(p)
    if p < 1:
        raise InvalidExponent(f"L^p needs p >= 1, got {p}")
    vals = np.abs(f.to_float_array())
    if math.isinf(p):
        return float(vals.max(initial=0.0))
    volf = 2.0 ** f.grid.cell_volume_exp
    if p == 2 and f.mode == EXACT:
        return math.sqrt(l2_norm_sq(f).to_float())
    return float((vals ** p).sum() * volf) ** (1.0 / p)


# ---- seeded random signals ----

LAWS = ("uniform", "pm1", "sparse")


def random_signal(grid: TorusGrid, seed: int, law: str = "uniform", mode: str = EXACT) -> GridSignal:
    """Deterministic signal from (seed, law); dyadic values with small exponents."""
    if law not in LAWS:
        raise ValueError(f"unknown law {law!r}; choose from {LAWS}")
    # str seeds hash stably (unlike tuples, which go through PYTHONHASHSEED)
    rng = random.Random(f"{law}:{seed}")
    n = grid.ncells
    mants = np.empty(n, dtype=object)
    if law == "uniform":
        for i in range(n):
            mants[i] = rng.randrange(-(1 << 12), 1 << 12)
        ea = -12
    elif law == "pm1":
        for i in range(n):
            mants[i] = 1 if rng.random() < 0.5 else -1
        ea = 0
    else:
        for i in range(n):
            mants[i] = rng.randrange(-16, 17) if rng.random() < 0.1 else 0
        ea = -4
    if mode == FLOAT:
        return GridSignal(grid, FLOAT, mants.astype(np.float64) * 2.0 ** ea)
    return GridSignal(grid, EXACT, mants, ea)


# ---- TGS1 signal files ----

def write_tgs1(f: GridSignal, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("TGS1\n")
        fh.write(f"axes: {format_axes(f.grid.axes)}\n")
        fh.write(f"mode: {f.mode}\n")
        if f.mode == FLOAT:
            for v in f._a:
                fh.write(f"{float(v)!r}\n")
        else:
            for i in range(f.grid.ncells):
                fh.write(f.value_at(i).to_tokens() + "\n")


def read_tgs1(path) -> GridSignal:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 3 or lines[0].strip() != "TGS1":
        raise ValueError("not a TGS1 file")
    if not lines[1].startswith("axes:") or not lines[2].startswith("mode:"):
        raise ValueError("malformed TGS1 header")
    grid = make_grid(parse_axes(lines[1].partition(":")[2]))
    mode = lines[2].partition(":")[2].strip()
    body = [ln for ln in lines[3:] if ln.strip()]
    if len(body) != grid.ncells:
        raise ValueError(f"expected {grid.ncells} value lines, found {len(body)}")
    if mode == FLOAT:
        return GridSignal.from_floats(grid, [float(ln) for ln in body])
    return GridSignal.from_values(grid, [DR.from_tokens(ln) for ln in body])
