"""Three twisted product Haar systems on a 2m-dimensional dyadic torus.

System 1 is the tensor family h(x1, x2) = h_I(x1) * h_J(x2) over dyadic cubes
I, J of side 2^-k1, 2^-k2 and sign patterns eps in {1..2^m-1}^2.  Systems 2 and
3 are its pullbacks under the shears (x1,x2) -> (x1-x2,x2) and (x1,x2) ->
(x1,x2-x1); pullbacks are cell permutations, so each system is orthonormal.

Scale convention: a cube at scale k has side 2^-k, so larger k is finer.  On an
axis with extent exponent L and resolution exponent K the admissible Haar
scales are -L <= k <= K-1.  One boundary level per parameter, the sentinel
k = -L-1 with eps = 0, denotes the normalized block average (the projection
onto functions constant in that parameter).  With the boundary levels included
and the twice-average combination excluded, each system is a complete
orthonormal basis of the mean-zero subspace, which is what makes the triple
union a tight frame with bound exactly 3.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dyadic import DyadicRational as DR
from .errors import DimensionMismatch, ExactnessError, GridMismatch, ResolutionError
from .grid import EXACT, FLOAT, GridSignal, TorusGrid, inner_product, l2_norm_sq, make_grid
from .shears import PullbackOperator, make_shear

SYSTEMS = (1, 2, 3)


class EuclidSystem:
    """Grid plus the three shear pullbacks for a 2m-axis torus."""

    def __init__(self, m: int = 1, extent_exp: int = 0, res_exp: int = 4):
        if m < 1:
            raise DimensionMismatch("m must be at least 1")
        self.m = m
        self.extent_exp = extent_exp
        self.res_exp = res_exp
        self.grid = make_grid([(extent_exp, res_exp)] * (2 * m))
        self.avg_level = -extent_exp - 1
        self.k_min = -extent_exp
        self.k_max = res_exp - 1          # finest scale with resolvable children
        self._pull = {
            2: PullbackOperator(make_shear("T2", self.grid)),
            3: PullbackOperator(make_shear("T3", self.grid)),
        }
        self._pull_adj = {i: op.adjoint() for i, op in self._pull.items()}

    def block_axes(self, block: int) -> range:
        return range(0, self.m) if block == 1 else range(self.m, 2 * self.m)

    def pull(self, system: int) -> PullbackOperator | None:
        return self._pull.get(system)

    def pull_adj(self, system: int) -> PullbackOperator | None:
        return self._pull_adj.get(system)

    def transport(self, f: GridSignal, system: int) -> GridSignal:
        """U_i f (identity for system 1)."""
        op = self.pull(system)
        return f if op is None else op(f)

    def transport_adj(self, f: GridSignal, system: int) -> GridSignal:
        op = self.pull_adj(system)
        return f if op is None else op(f)


@dataclass(frozen=True, order=True)
class HaarIndex:
    system: int
    k1: int
    pos1: tuple[int, ...]
    eps1: int
    k2: int
    pos2: tuple[int, ...]
    eps2: int


@dataclass(frozen=True)
class ScaleRange:
    k1_lo: int
    k1_hi: int
    k2_lo: int
    k2_hi: int

    @classmethod
    def full(cls, sys: EuclidSystem) -> "ScaleRange":
        return cls(sys.avg_level, sys.k_max, sys.avg_level, sys.k_max)

    def is_full(self, sys: EuclidSystem) -> bool:
        return self == ScaleRange.full(sys)

    def levels(self, sys: EuclidSystem, param: int) -> list[int]:
        lo, hi = (self.k1_lo, self.k1_hi) if param == 1 else (self.k2_lo, self.k2_hi)
        if lo < sys.avg_level or hi > sys.k_max or lo > hi:
            raise ResolutionError(f"scale range [{lo},{hi}] not resolvable on the grid")
        out = []
        for k in range(lo, hi + 1):
            if k == sys.avg_level or sys.k_min <= k:
                out.append(k)
        return out


def _check_index(sys: EuclidSystem, idx: HaarIndex) -> None:
    if idx.system not in SYSTEMS:
        raise DimensionMismatch(f"system must be one of {SYSTEMS}")
    for k, pos, eps in ((idx.k1, idx.pos1, idx.eps1), (idx.k2, idx.pos2, idx.eps2)):
        if k == sys.avg_level:
            if eps != 0 or pos != ():
                raise ResolutionError("boundary level takes eps=0 and empty position")
            continue
        if not (sys.k_min <= k <= sys.k_max):
            raise ResolutionError(f"scale {k} outside [{sys.k_min},{sys.k_max}]")
        if not (1 <= eps < (1 << sys.m)):
            raise ResolutionError(f"eps {eps} outside [1, 2^m-1]")
        npos = 1 << (sys.extent_exp + k)
        if len(pos) != sys.m or any(not (0 <= p < npos) for p in pos):
            raise ResolutionError(f"position {pos} invalid at scale {k}")
    if idx.k1 == sys.avg_level and idx.k2 == sys.avg_level:
        raise ResolutionError("the twice-average index is excluded (it is the constant)")


def _axis_vector(sys: EuclidSystem, k: int, p: int, oscillates: bool) -> np.ndarray:
    """Full-length profile of one tensor factor along one axis."""
    n = 1 << (sys.extent_exp + sys.res_exp)
    v = np.zeros(n, dtype=np.int64)
    if k == sys.avg_level:
        v[:] = 1
        return v
    w = 1 << (sys.res_exp - k)            # cells per cube side
    lo = p * w
    if oscillates:
        v[lo:lo + w // 2] = 1
        v[lo + w // 2:lo + w] = -1
    else:
        v[lo:lo + w] = 1
    return v


def _vol_exp(sys: EuclidSystem, idx: HaarIndex) -> int:
    out = 0
    for k in (idx.k1, idx.k2):
        out += sys.m * (sys.extent_exp if k == sys.avg_level else -k)
    return out


def haar_pattern(sys: EuclidSystem, idx: HaarIndex) -> tuple[np.ndarray, int]:
    """Unnormalized sign pattern (flat int array) and its support volume exponent."""
    _check_index(sys, idx)
    vecs = []
    for block, (k, pos, eps) in enumerate(
            ((idx.k1, idx.pos1, idx.eps1), (idx.k2, idx.pos2, idx.eps2)), start=1):
        for j, axis in enumerate(sys.block_axes(block)):
            p = pos[j] if pos else 0
            vecs.append(_axis_vector(sys, k, p, bool(eps >> j & 1)))
    pat = vecs[0]
    for v in vecs[1:]:
        pat = np.multiply.outer(pat, v)
    pat = pat.reshape(-1)
    op = sys.pull(idx.system)
    if op is not None:
        pat = pat[op.perm]
    return pat, _vol_exp(sys, idx)


def haar_norm(sys: EuclidSystem, idx: HaarIndex) -> DR:
    """L2 normalization 2^(-v/2) where 2^v is the support volume."""
    return DR.sqrt_pow2(-_vol_exp(sys, idx))


def haar_signal(sys: EuclidSystem, idx: HaarIndex) -> GridSignal:
    pat, vexp = haar_pattern(sys, idx)
    mants = pat.astype(object)
    if vexp % 2 == 0:
        return GridSignal(sys.grid, EXACT, mants, -vexp // 2)
    zero = np.zeros(sys.grid.ncells, dtype=object)
    return GridSignal(sys.grid, EXACT, zero, 0, mants, -(vexp + 1) // 2)


def coefficient(sys: EuclidSystem, f: GridSignal, idx: HaarIndex) -> DR:
    if f.grid != sys.grid:
        raise GridMismatch("signal does not live on the system grid")
    return inner_product(f, haar_signal(sys, idx))


def enumerate_indices(sys: EuclidSystem, system: int,
                      srange: ScaleRange | None = None) -> list[HaarIndex]:
    srange = srange or ScaleRange.full(sys)
    out = []
    eps_all = range(1, 1 << sys.m)
    for k1 in srange.levels(sys, 1):
        f1 = _factor_indices(sys, k1, eps_all)
        for k2 in srange.levels(sys, 2):
            if k1 == sys.avg_level and k2 == sys.avg_level:
                continue
            for pos1, eps1 in f1:
                for pos2, eps2 in _factor_indices(sys, k2, eps_all):
                    out.append(HaarIndex(system, k1, pos1, eps1, k2, pos2, eps2))
    return out


def _factor_indices(sys: EuclidSystem, k: int, eps_all) -> list[tuple[tuple[int, ...], int]]:
    if k == sys.avg_level:
        return [((), 0)]
    npos = 1 << (sys.extent_exp + k)
    positions = itertools.product(range(npos), repeat=sys.m)
    return [(pos, eps) for pos in positions for eps in eps_all]


def _group_sums(arr: np.ndarray, shape: tuple[int, ...], groups: list[int]) -> np.ndarray:
    """Sum over contiguous groups along each axis; groups[a] divides shape[a]."""
    work = arr.reshape(shape)
    for axis, g in enumerate(groups):
        if g == 1:
            continue
        moved = np.moveaxis(work, axis, -1)
        lead = moved.shape[:-1]
        work = np.moveaxis(
            moved.reshape(lead + (moved.shape[-1] // g, g)).sum(axis=-1), -1, axis)
    return work


def analyze(sys: EuclidSystem, f: GridSignal, system: int,
            srange: ScaleRange | None = None) -> "HaarCoefficients":
    """All coefficients of f in one system over a scale range (exact)."""
    if f.grid != sys.grid or f.mode != EXACT:
        raise GridMismatch("analyze needs an exact signal on the system grid")
    srange = srange or ScaleRange.full(sys)
    g = sys.transport_adj(f, system)          # <f, U h> = <U* f, h>
    a, ea, b, eb = g.components()
    cve = sys.grid.cell_volume_exp
    data: dict[HaarIndex, DR] = {}
    for k1 in srange.levels(sys, 1):
        for k2 in srange.levels(sys, 2):
            if k1 == sys.avg_level and k2 == sys.avg_level:
                continue
            groups, childs = _level_groups(sys, k1, k2)
            Ca = _group_sums(a, sys.grid.shape, groups)
            Cb = _group_sums(b, sys.grid.shape, groups) if b is not None else None
            vexp = sys.m * ((sys.extent_exp if k1 == sys.avg_level else -k1)
                            + (sys.extent_exp if k2 == sys.avg_level else -k2))
            norm = DR.sqrt_pow2(-vexp)
            for idx, raw_a, raw_b in _contract(sys, system, k1, k2, Ca, Cb):
                val = DR(raw_a, ea + cve) * norm
                if raw_b:
                    val = val + DR(0, 0, raw_b, eb + cve) * norm
                data[idx] = val
    return HaarCoefficients(system, srange, data)


def _level_groups(sys: EuclidSystem, k1: int, k2: int):
    """Per-axis child-group sizes and child counts for a level pair."""
    groups, childs = [], []
    for block, k in ((1, k1), (2, k2)):
        n = 1 << (sys.extent_exp + sys.res_exp)
        for _ in sys.block_axes(block):
            if k == sys.avg_level:
                groups.append(n)
                childs.append(1)
            else:
                g = 1 << (sys.res_exp - k - 1)   # half-cube side in cells
                groups.append(g)
                childs.append(n // g)
    return groups, childs


def _contract(sys: EuclidSystem, system: int, k1: int, k2: int,
              Ca: np.ndarray, Cb: np.ndarray | None):
    """Yield (index, raw sums) for every position/eps at a level pair."""
    m = sys.m
    specs = []
    for k in (k1, k2):
        if k == sys.avg_level:
            specs.append((True, 1))
        else:
            specs.append((False, 1 << (sys.extent_exp + k)))
    corners1 = [()] if specs[0][0] else list(itertools.product((0, 1), repeat=m))
    corners2 = [()] if specs[1][0] else list(itertools.product((0, 1), repeat=m))
    eps1_all = [0] if specs[0][0] else list(range(1, 1 << m))
    eps2_all = [0] if specs[1][0] else list(range(1, 1 << m))
    pos1_all = [()] if specs[0][0] else list(itertools.product(range(specs[0][1]), repeat=m))
    pos2_all = [()] if specs[1][0] else list(itertools.product(range(specs[1][1]), repeat=m))

    flatC = Ca.reshape(-1)
    flatB = Cb.reshape(-1) if Cb is not None else None
    cshape = Ca.shape

    for pos1 in pos1_all:
        for pos2 in pos2_all:
            # child-sum values at the 2^m x 2^m corner grid of this position pair
            vals = {}
            for h1 in corners1:
                for h2 in corners2:
                    multi = []
                    for j in range(m):
                        multi.append((2 * pos1[j] + h1[j]) if pos1 else 0)
                    for j in range(m):
                        multi.append((2 * pos2[j] + h2[j]) if pos2 else 0)
                    fi = int(np.ravel_multi_index(tuple(multi), cshape))
                    vals[(h1, h2)] = (flatC[fi], flatB[fi] if flatB is not None else 0)
            for eps1 in eps1_all:
                for eps2 in eps2_all:
                    ra = 0
                    rb = 0
                    for (h1, h2), (va, vb) in vals.items():
                        s = 1
                        for j, h in enumerate(h1):
                            if (eps1 >> j & 1) and h:
                                s = -s
                        for j, h in enumerate(h2):
                            if (eps2 >> j & 1) and h:
                                s = -s
                        ra += s * va
                        rb += s * vb
                    yield HaarIndex(system, k1, pos1, eps1, k2, pos2, eps2), ra, rb


@dataclass
class HaarCoefficients:
    system: int
    scale_range: ScaleRange
    data: dict[HaarIndex, DR]

    def sorted_items(self):
        return sorted(self.data.items(), key=lambda kv: kv[0])

    def energy(self) -> DR:
        out = DR.zero()
        for c in self.data.values():
            out = out + c * c
        return out


def synthesize(sys: EuclidSystem, coeffs: HaarCoefficients) -> GridSignal:
    """Exact sum of coeff * haar element over all indices in the container."""
    shape = sys.grid.shape
    acc_a = np.zeros(shape, dtype=object)
    acc_ea = [None]
    acc_b = np.zeros(shape, dtype=object)
    acc_eb = [None]

    def add(acc, eref, slices, sign, mant, exp):
        if mant == 0:
            return
        if eref[0] is None:
            eref[0] = exp
        if exp < eref[0]:
            np.multiply(acc, 1 << (eref[0] - exp), out=acc)
            eref[0] = exp
        acc[slices] += sign * (mant << (exp - eref[0]))

    for idx, c in coeffs.data.items():
        val = c * haar_norm(sys, idx)
        slices, sign = _support_pattern(sys, idx)
        add(acc_a, acc_ea, slices, sign, val.mantissa, val.exponent)
        add(acc_b, acc_eb, slices, sign, val.root_mantissa, val.root_exponent)

    out = GridSignal(sys.grid, EXACT, acc_a.reshape(-1), acc_ea[0] or 0,
                     acc_b.reshape(-1), acc_eb[0] or 0)
    op = sys.pull(coeffs.system)
    return out if op is None else op(out)


def _support_pattern(sys: EuclidSystem, idx: HaarIndex):
    """Support slices and the sign array of the system-1 element at this index."""
    slices = []
    vecs = []
    n = 1 << (sys.extent_exp + sys.res_exp)
    for block, (k, pos, eps) in enumerate(
            ((idx.k1, idx.pos1, idx.eps1), (idx.k2, idx.pos2, idx.eps2)), start=1):
        for j, _axis in enumerate(sys.block_axes(block)):
            if k == sys.avg_level:
                slices.append(slice(0, n))
                vecs.append(np.ones(n, dtype=np.int64))
                continue
            w = 1 << (sys.res_exp - k)
            lo = pos[j] * w
            slices.append(slice(lo, lo + w))
            v = np.ones(w, dtype=np.int64)
            if eps >> j & 1:
                v[w // 2:] = -1
            vecs.append(v)
    sign = vecs[0]
    for v in vecs[1:]:
        sign = np.multiply.outer(sign, v)
    return tuple(slices), sign


@dataclass
class FrameReport:
    system_energies: dict[int, DR]
    energy: DR
    denominator: DR
    ratio: Fraction | None
    reconstruction: GridSignal
    partial: bool
    tight: bool


def frame_apply(sys: EuclidSystem, f: GridSignal,
                srange: ScaleRange | None = None) -> FrameReport:
    """Coefficient energy and (1/3)-reconstruction across all three systems.

    Over the full scale range the reconstruction is exact (the projection sum
    is 3(f - mean)).  A partial-range sum need not be divisible by 3 inside
    the dyadic lattice; the reconstruction is then reported in float mode.
    """
    srange = srange or ScaleRange.full(sys)
    partial = not srange.is_full(sys)
    energies = {}
    recon_sum = GridSignal.zeros(sys.grid, EXACT)
    for i in SYSTEMS:
        coeffs = analyze(sys, f, i, srange)
        energies[i] = coeffs.energy()
        recon_sum = recon_sum + synthesize(sys, coeffs)
    energy = DR.zero()
    for e in energies.values():
        energy = energy + e
    try:
        recon = recon_sum.divide_exact(3)
    except ExactnessError:
        recon = GridSignal(sys.grid, FLOAT, recon_sum.to_float_array() / 3.0)
    centered = f.sub_mean()
    denom = l2_norm_sq(centered)
    ratio = None
    if not denom.is_zero:
        ratio = energy.as_fraction() / denom.as_fraction()
    tight = (not partial) and energy == denom * 3 and recon.equals(centered)
    return FrameReport(energies, energy, denom, ratio, recon, partial, tight)


# ---- THC1 coefficient files ----

def _pos_token(pos: tuple[int, ...]) -> str:
    return ",".join(str(p) for p in pos) if pos else "-"


def _parse_pos(tok: str) -> tuple[int, ...]:
    return () if tok == "-" else tuple(int(p) for p in tok.split(","))


def write_thc1(sys: EuclidSystem, coeffs: HaarCoefficients, path) -> None:
    sr = coeffs.scale_range
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("THC1\n")
        fh.write(f"system: {coeffs.system}\n")
        fh.write(f"m: {sys.m}\n")
        fh.write(f"axes: {sys.extent_exp},{sys.res_exp}\n")
        fh.write(f"scaleRange: {sr.k1_lo},{sr.k1_hi};{sr.k2_lo},{sr.k2_hi}\n")
        for idx, c in coeffs.sorted_items():
            fh.write(f"{idx.k1} {idx.k2} {_pos_token(idx.pos1)} {_pos_token(idx.pos2)} "
                     f"{idx.eps1} {idx.eps2} {c.to_tokens()}\n")


def read_thc1(path) -> tuple[dict, HaarCoefficients]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if lines[0] != "THC1":
        raise ValueError("not a THC1 file")
    header = {}
    body = []
    for ln in lines[1:]:
        if not body and ":" in ln and ln.split()[0].endswith(":"):
            key, _, val = ln.partition(":")
            header[key.strip()] = val.strip()
        else:
            body.append(ln)
    system = int(header["system"])
    r1, r2 = header["scaleRange"].split(";")
    k1_lo, k1_hi = (int(v) for v in r1.split(","))
    k2_lo, k2_hi = (int(v) for v in r2.split(","))
    data = {}
    for ln in body:
        toks = ln.split()
        idx = HaarIndex(system, int(toks[0]), _parse_pos(toks[2]), int(toks[4]),
                        int(toks[1]), _parse_pos(toks[3]), int(toks[5]))
        data[idx] = DR.from_tokens(" ".join(toks[6:]))
    return header, HaarCoefficients(system, ScaleRange(k1_lo, k1_hi, k2_lo, k2_hi), data)
