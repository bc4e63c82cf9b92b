"""Tri-parameter twisted Haar systems on the quotient nilpotent model.

The model grid carries d1+d2+d3 spatial axes and two central axes (t1, t2).
A parabolic block of scale s in factor mu is a spatial dyadic cube of side
2^s times, when the factor is paired with a central axis, a dyadic interval
of exact length 2^(2s+kappa).  Larger scale is coarser; the window
[cell_scale, top_scale] is chosen so that every block scale in it splits
exactly into grid cells.

Three shard families tile the grid at each scale triple: type 1 pairs
(z1, t1) and (z2, t2) and leaves z3 plain; type 2 pairs (z1, t1) and
(z3, t2) and leaves z2 plain; type 3 is the preimage of the type 2 family
under the central shear Theta(z, t1, t2) = (z, t1 - t2, t2).  Types 1 and 2
are exact products, so their Haar systems are plain tensor bases, and the
type 3 system is the unitary pullback of type 2.

Refining a parabolic block halves each spatial side and quarters the central
interval, so a block has 2^(d+2) children and its detail space has dimension
2^(d+2)-1.  Sign patterns are indexed by eps in {1 .. 2^(d+2)-1}: the low d
bits choose spatial oscillation and the top two bits choose one of the three
Walsh oscillations over the four central quarters (bit d alternates every
quarter, bit d+1 alternates every half).  All patterns take values +-1 on
the whole block, so every element is supported exactly on its shard.
Factors without a central axis keep the plain cube indexing {1 .. 2^d-1}.

As in the Euclidean module, one boundary level per parameter (the sentinel,
realized by the scale-top_scale average) completes each system to an
orthonormal basis of the mean-zero subspace, making the union of the three
systems a tight frame with bound exactly 3.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dyadic import DyadicRational as DR
from .errors import (
    ComparisonFailure,
    DimensionMismatch,
    GridMismatch,
    ResolutionError,
    ScaleError,
)
from .grid import EXACT, FLOAT, GridSignal, inner_product, l2_norm_sq, make_grid
from .haar import _group_sums
from .shards import (
    FiberedRegion,
    _fiber_contains_box,
    _pieces_in_sheared_box,
    _sheared_box_in_pieces,
)
from .shears import PullbackOperator, make_shear

NIL_TYPES = (1, 2, 3)

# central axis index paired with each factor; type 3 shares the type 2 layout
_PAIRING = {1: {1: 0, 2: 1}, 2: {1: 0, 3: 1}}


class NilSystem:
    """Model grid for one scale window plus the central shear pullback.

    dims fixes the spatial dimension of each factor.  Spatial axes span
    [0, 2^top_scale) in cells of width 2^cell_scale; central axes span
    [0, 2^(2 top_scale + kappa)) in cells of width 2^(2 cell_scale + kappa).
    Axis order is z1.., z2.., z3.., t1, t2.
    """

    def __init__(self, dims=(1, 1, 1), kappa: int = 0,
                 cell_scale: int = 0, top_scale: int = 2):
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DimensionMismatch("three factor dimensions, each at least 1")
        if top_scale <= cell_scale:
            raise ScaleError("the scale window needs top_scale > cell_scale")
        if kappa < 0:
            raise ScaleError("kappa must be nonnegative")
        self.dims = tuple(int(d) for d in dims)
        self.kappa = kappa
        self.cell_scale = cell_scale
        self.top_scale = top_scale
        spatial = (top_scale, -cell_scale)
        central = (2 * top_scale + kappa, -(2 * cell_scale + kappa))
        self.grid = make_grid([spatial] * sum(self.dims) + [central, central])
        self.nspatial = sum(self.dims)
        starts = (0, self.dims[0], self.dims[0] + self.dims[1])
        self.z_axes = tuple(tuple(range(s, s + d))
                            for s, d in zip(starts, self.dims))
        self.t_axes = (self.nspatial, self.nspatial + 1)
        self.avg_level = top_scale + 1     # sentinel, see module docstring
        self.s_min = cell_scale + 1        # finest block scale with children
        self.s_max = top_scale
        self._pull = {3: PullbackOperator(make_shear("Theta", self.grid))}
        self._pull_adj = {3: self._pull[3].adjoint()}

    def factor_axes(self, type_k: int, mu: int):
        """Spatial axes of one factor and its central axis (or None)."""
        base = 2 if type_k == 3 else type_k
        t = _PAIRING[base].get(mu)
        return self.z_axes[mu - 1], None if t is None else self.t_axes[t]

    def pull(self, type_k: int) -> PullbackOperator | None:
        return self._pull.get(type_k)

    def pull_adj(self, type_k: int) -> PullbackOperator | None:
        return self._pull_adj.get(type_k)

    def transport(self, f: GridSignal, type_k: int) -> GridSignal:
        """U_k f (identity for the product types)."""
        op = self.pull(type_k)
        return f if op is None else op(f)

    def transport_adj(self, f: GridSignal, type_k: int) -> GridSignal:
        op = self.pull_adj(type_k)
        return f if op is None else op(f)


def _check_type(type_k: int) -> None:
    if type_k not in NIL_TYPES:
        raise DimensionMismatch(f"type must be one of {NIL_TYPES}")


def _check_block_scale(ns: NilSystem, s: int) -> None:
    if not (ns.cell_scale <= s <= ns.top_scale) and s != ns.avg_level:
        raise ScaleError(
            f"block scale {s} outside [{ns.cell_scale},{ns.top_scale}]")


def _check_haar_scale(ns: NilSystem, s: int) -> None:
    if s != ns.avg_level and not (ns.s_min <= s <= ns.s_max):
        raise ScaleError(
            f"Haar block scale {s} needs children; window is "
            f"[{ns.s_min},{ns.s_max}]")


# ---- blocks and shards ----

@dataclass(frozen=True)
class ParabolicBlock:
    """One factor's block: spatial cube of side 2^scale, central interval of
    length 2^(2 scale + kappa) when the factor carries a central axis."""
    mu: int
    scale: int
    spatial_pos: tuple[int, ...]
    central_pos: int | None

    def spatial_side(self) -> DR:
        return DR.pow2(self.scale)

    def central_length(self, kappa: int) -> DR | None:
        if self.central_pos is None:
            return None
        return DR.pow2(2 * self.scale + kappa)


@dataclass(frozen=True, order=True)
class AnalyticShard:
    """Product of three parabolic blocks (types 1, 2) or the Theta preimage
    of a type 2 product (type 3).  pos lists per-factor block positions,
    spatial entries first and the central position last for paired factors."""
    type_k: int
    j: tuple[int, int, int]
    pos: tuple[tuple[int, ...], ...]


def _check_shard(ns: NilSystem, shard: AnalyticShard) -> None:
    _check_type(shard.type_k)
    base = 2 if shard.type_k == 3 else shard.type_k
    for mu in (1, 2, 3):
        s = shard.j[mu - 1]
        _check_block_scale(ns, s)
        if s == ns.avg_level:
            raise ScaleError("shards exist at regular scales only")
        d = ns.dims[mu - 1]
        paired = _PAIRING[base].get(mu) is not None
        p = shard.pos[mu - 1]
        if len(p) != d + (1 if paired else 0):
            raise ResolutionError(f"factor {mu} position {p} has wrong length")
        nsp = 1 << (ns.top_scale - s)
        for v in p[:d]:
            if not (0 <= v < nsp):
                raise ResolutionError(f"spatial position {v} outside [0,{nsp})")
        if paired and not (0 <= p[d] < nsp * nsp):
            raise ResolutionError(
                f"central position {p[d]} outside [0,{nsp * nsp})")


def _box_cells(ns: NilSystem, shard: AnalyticShard) -> np.ndarray:
    """Flat cell indices of the product block (types 1 and 2 structure)."""
    base = 2 if shard.type_k == 3 else shard.type_k
    ranges: list = [None] * ns.grid.ndim
    for mu in (1, 2, 3):
        zax, tax = ns.factor_axes(base, mu)
        s = shard.j[mu - 1]
        p = shard.pos[mu - 1]
        w = 1 << (s - ns.cell_scale)
        for i, a in enumerate(zax):
            ranges[a] = np.arange(p[i] * w, (p[i] + 1) * w)
        if tax is not None:
            wc = 1 << (2 * (s - ns.cell_scale))
            cp = p[len(zax)]
            ranges[tax] = np.arange(cp * wc, (cp + 1) * wc)
    mesh = np.meshgrid(*ranges, indexing="ij")
    flat = np.ravel_multi_index(tuple(g.reshape(-1) for g in mesh),
                                ns.grid.shape)
    return flat.astype(np.int64)


def shard_cells(ns: NilSystem, shard: AnalyticShard) -> np.ndarray:
    """Sorted flat cell indices; type 3 maps the type 2 block through
    Theta^(-1), which on cells is the adjoint permutation."""
    _check_shard(ns, shard)
    cells = _box_cells(ns, shard)
    if shard.type_k == 3:
        cells = ns.pull_adj(3).perm[cells]
    return np.sort(cells)


def shard_volume_exp(ns: NilSystem, shard: AnalyticShard) -> int:
    """log2 of the shard measure: sum d_mu j_mu plus 2j+kappa per paired
    factor."""
    base = 2 if shard.type_k == 3 else shard.type_k
    out = 0
    for mu in (1, 2, 3):
        out += ns.dims[mu - 1] * shard.j[mu - 1]
        if _PAIRING[base].get(mu) is not None:
            out += 2 * shard.j[mu - 1] + ns.kappa
    return out


def shard_volume(ns: NilSystem, shard: AnalyticShard) -> DR:
    return DR.pow2(shard_volume_exp(ns, shard))


def shard_blocks(ns: NilSystem, shard: AnalyticShard) -> tuple[ParabolicBlock, ...]:
    """The three per-factor blocks in the product structure."""
    base = 2 if shard.type_k == 3 else shard.type_k
    out = []
    for mu in (1, 2, 3):
        d = ns.dims[mu - 1]
        p = shard.pos[mu - 1]
        paired = _PAIRING[base].get(mu) is not None
        out.append(ParabolicBlock(mu, shard.j[mu - 1], p[:d],
                                  p[d] if paired else None))
    return tuple(out)


def shard_parent(ns: NilSystem, shard: AnalyticShard) -> AnalyticShard:
    """The unique shard one scale step coarser that contains this one."""
    _check_shard(ns, shard)
    base = 2 if shard.type_k == 3 else shard.type_k
    jp = tuple(s + 1 for s in shard.j)
    for s in jp:
        if s > ns.top_scale:
            raise ScaleError("parent scale leaves the window")
    pos = []
    for mu in (1, 2, 3):
        d = ns.dims[mu - 1]
        p = shard.pos[mu - 1]
        q = tuple(v >> 1 for v in p[:d])
        if _PAIRING[base].get(mu) is not None:
            q = q + (p[d] >> 2,)
        pos.append(q)
    return AnalyticShard(shard.type_k, jp, tuple(pos))


def analytic_family(ns: NilSystem, type_k: int,
                    j: tuple[int, int, int]) -> list[AnalyticShard]:
    """All shards of one type at a scale triple; they partition the grid."""
    _check_type(type_k)
    for s in j:
        _check_block_scale(ns, s)
        if s == ns.avg_level:
            raise ScaleError("shards exist at regular scales only")
    base = 2 if type_k == 3 else type_k
    factor_pos = []
    for mu in (1, 2, 3):
        d = ns.dims[mu - 1]
        nsp = 1 << (ns.top_scale - j[mu - 1])
        pos = list(itertools.product(range(nsp), repeat=d))
        if _PAIRING[base].get(mu) is not None:
            pos = [p + (c,) for p in pos for c in range(nsp * nsp)]
        factor_pos.append(pos)
    return [AnalyticShard(type_k, tuple(j), combo)
            for combo in itertools.product(*factor_pos)]


# ---- Haar indices and explicit elements ----

@dataclass(frozen=True, order=True)
class NilpotentHaarIndex:
    """Extended tri-parameter index: per factor a block scale (the sentinel
    for the boundary average), a block position and a sign pattern."""
    type_k: int
    scales: tuple[int, int, int]
    pos: tuple[tuple[int, ...], ...]
    eps: tuple[int, int, int]

    @classmethod
    def from_shard(cls, shard: AnalyticShard,
                   eps: tuple[int, int, int]) -> "NilpotentHaarIndex":
        return cls(shard.type_k, shard.j, shard.pos, tuple(eps))

    def shard(self) -> AnalyticShard:
        return AnalyticShard(self.type_k, self.scales, self.pos)


def _eps_bound(d: int, paired: bool) -> int:
    return 1 << (d + 2) if paired else 1 << d


def _check_index(ns: NilSystem, idx: NilpotentHaarIndex) -> None:
    _check_type(idx.type_k)
    base = 2 if idx.type_k == 3 else idx.type_k
    for mu in (1, 2, 3):
        s, p, e = idx.scales[mu - 1], idx.pos[mu - 1], idx.eps[mu - 1]
        if s == ns.avg_level:
            if p != () or e != 0:
                raise ResolutionError(
                    "the boundary level takes an empty position and eps 0")
            continue
        _check_haar_scale(ns, s)
        d = ns.dims[mu - 1]
        paired = _PAIRING[base].get(mu) is not None
        if not (1 <= e < _eps_bound(d, paired)):
            raise ResolutionError(
                f"eps {e} outside [1,{_eps_bound(d, paired) - 1}] for factor {mu}")
        nsp = 1 << (ns.top_scale - s)
        want = d + (1 if paired else 0)
        if len(p) != want:
            raise ResolutionError(f"factor {mu} position {p} has wrong length")
        for v in p[:d]:
            if not (0 <= v < nsp):
                raise ResolutionError(f"spatial position {v} outside [0,{nsp})")
        if paired and not (0 <= p[d] < nsp * nsp):
            raise ResolutionError(
                f"central position {p[d]} outside [0,{nsp * nsp})")
    if all(s == ns.avg_level for s in idx.scales):
        raise ResolutionError("the all-average index is excluded")


def _walsh_sign(d: int, eps: int, corner: tuple[int, ...]) -> int:
    """Parity sign at a child corner; the corner lists d spatial bits and,
    for paired factors, the central quarter 0..3 last."""
    acc = 0
    for i in range(d):
        acc ^= (eps >> i) & corner[i] & 1
    if len(corner) > d:
        q = corner[d]
        acc ^= (eps >> d) & q & 1
        acc ^= (eps >> (d + 1)) & (q >> 1) & 1
    return -1 if acc else 1


def _axis_profiles(ns: NilSystem, idx: NilpotentHaarIndex):
    """Per-axis +-1/0 vectors of the product-structure element, plus the
    support volume exponent."""
    base = 2 if idx.type_k == 3 else idx.type_k
    vecs: list = [None] * ns.grid.ndim
    vol = 0
    for mu in (1, 2, 3):
        zax, tax = ns.factor_axes(base, mu)
        s, p, e = idx.scales[mu - 1], idx.pos[mu - 1], idx.eps[mu - 1]
        d = ns.dims[mu - 1]
        if s == ns.avg_level:
            for a in zax:
                vecs[a] = np.ones(ns.grid.shape[a], dtype=np.int64)
                vol += ns.top_scale
            if tax is not None:
                vecs[tax] = np.ones(ns.grid.shape[tax], dtype=np.int64)
                vol += 2 * ns.top_scale + ns.kappa
            continue
        w = 1 << (s - ns.cell_scale)
        for i, a in enumerate(zax):
            v = np.zeros(ns.grid.shape[a], dtype=np.int64)
            lo = p[i] * w
            if (e >> i) & 1:
                v[lo:lo + w // 2] = 1
                v[lo + w // 2:lo + w] = -1
            else:
                v[lo:lo + w] = 1
            vecs[a] = v
            vol += s
        if tax is not None:
            wc = 1 << (2 * (s - ns.cell_scale))
            qw = wc // 4
            lo = p[d] * wc
            v = np.zeros(ns.grid.shape[tax], dtype=np.int64)
            for q in range(4):
                v[lo + q * qw:lo + (q + 1) * qw] = _walsh_sign(
                    d, e, (0,) * d + (q,))
            vecs[tax] = v
            vol += 2 * s + ns.kappa
    return vecs, vol


def nil_haar_pattern(ns: NilSystem, idx: NilpotentHaarIndex):
    """Unnormalized sign pattern (flat array) and support volume exponent."""
    _check_index(ns, idx)
    vecs, vol = _axis_profiles(ns, idx)
    pat = vecs[0]
    for v in vecs[1:]:
        pat = np.multiply.outer(pat, v)
    pat = pat.reshape(-1)
    if idx.type_k == 3:
        pat = pat[ns.pull(3).perm]
    return pat, vol


def nilpotent_haar_signal(ns: NilSystem, idx: NilpotentHaarIndex) -> GridSignal:
    """L2-normalized element; values are +-2^(-v/2) on the shard."""
    pat, vexp = nil_haar_pattern(ns, idx)
    mants = pat.astype(object)
    if vexp % 2 == 0:
        return GridSignal(ns.grid, EXACT, mants, -vexp // 2)
    zero = np.zeros(ns.grid.ncells, dtype=object)
    return GridSignal(ns.grid, EXACT, zero, 0, mants, -(vexp + 1) // 2)


def nil_coefficient(ns: NilSystem, f: GridSignal, idx: NilpotentHaarIndex) -> DR:
    if f.grid != ns.grid:
        raise GridMismatch("signal does not live on the model grid")
    return inner_product(f, nilpotent_haar_signal(ns, idx))


def extended_levels(ns: NilSystem) -> list[int]:
    """Regular Haar block scales plus the boundary sentinel."""
    return list(range(ns.s_min, ns.s_max + 1)) + [ns.avg_level]


def extended_triples(ns: NilSystem) -> list[tuple[int, int, int]]:
    return [t for t in itertools.product(extended_levels(ns), repeat=3)
            if any(lv != ns.avg_level for lv in t)]


def enumerate_nil_indices(ns: NilSystem, type_k: int,
                          triples=None) -> list[NilpotentHaarIndex]:
    """Every extended index of one system (the all-average one excluded)."""
    _check_type(type_k)
    base = 2 if type_k == 3 else type_k
    out = []
    for triple in (triples if triples is not None else extended_triples(ns)):
        factor_items = []
        for mu in (1, 2, 3):
            s = triple[mu - 1]
            if s == ns.avg_level:
                factor_items.append([((), 0)])
                continue
            _check_haar_scale(ns, s)
            d = ns.dims[mu - 1]
            paired = _PAIRING[base].get(mu) is not None
            nsp = 1 << (ns.top_scale - s)
            pos = list(itertools.product(range(nsp), repeat=d))
            if paired:
                pos = [p + (c,) for p in pos for c in range(nsp * nsp)]
            eps_all = range(1, _eps_bound(d, paired))
            factor_items.append([(p, e) for p in pos for e in eps_all])
        for combo in itertools.product(*factor_items):
            out.append(NilpotentHaarIndex(
                type_k, tuple(triple),
                tuple(c[0] for c in combo), tuple(c[1] for c in combo)))
    return out


# ---- conditional expectations and martingale differences ----

def _partial(ns: NilSystem, f: GridSignal, base: int, mu: int, s: int) -> GridSignal:
    """One-factor conditional expectation at block scale s (product types)."""
    s_eff = ns.top_scale if s == ns.avg_level else s
    zax, tax = ns.factor_axes(base, mu)
    groups = {a: s_eff - ns.cell_scale for a in zax}
    if tax is not None:
        groups[tax] = 2 * (s_eff - ns.cell_scale)
    return f.average_groups(groups)


def nilpotent_cond_expect(ns: NilSystem, f: GridSignal,
                          j: tuple[int, int, int], type_k: int) -> GridSignal:
    """E_j^(k): average over the scale-j shards of one type.  Type 3 runs
    through the shear conjugation U3 E^(2) U3*."""
    _check_type(type_k)
    if f.grid != ns.grid:
        raise GridMismatch("signal does not live on the model grid")
    for s in j:
        _check_block_scale(ns, s)
    if type_k == 3:
        inner = nilpotent_cond_expect(ns, ns.transport_adj(f, 3), j, 2)
        return ns.transport(inner, 3)
    groups: dict[int, int] = {}
    for mu in (1, 2, 3):
        s = j[mu - 1]
        s_eff = ns.top_scale if s == ns.avg_level else s
        zax, tax = ns.factor_axes(type_k, mu)
        for a in zax:
            groups[a] = s_eff - ns.cell_scale
        if tax is not None:
            groups[tax] = 2 * (s_eff - ns.cell_scale)
    return f.average_groups(groups)


def nilpotent_cond_expect_direct(ns: NilSystem, f: GridSignal,
                                 j: tuple[int, int, int], type_k: int) -> GridSignal:
    """Oracle path: explicit atom ids per cell, then brute-force averaging.
    For type 3 the atom of a cell is the type 2 block of its Theta image."""
    _check_type(type_k)
    if f.grid != ns.grid:
        raise GridMismatch("signal does not live on the model grid")
    for s in j:
        _check_block_scale(ns, s)
    base = 2 if type_k == 3 else type_k
    n = ns.grid.ncells
    op = ns.pull(type_k)
    perm = op.perm if op is not None else np.arange(n, dtype=np.int64)
    multi = np.unravel_index(perm, ns.grid.shape)
    atom = np.zeros(n, dtype=np.int64)
    for mu in (1, 2, 3):
        s = j[mu - 1]
        s_eff = ns.top_scale if s == ns.avg_level else s
        zax, tax = ns.factor_axes(base, mu)
        sh = s_eff - ns.cell_scale
        for a in zax:
            ngroups = ns.grid.shape[a] >> sh
            atom = atom * max(ngroups, 1) + (multi[a] >> sh)
        if tax is not None:
            ngroups = ns.grid.shape[tax] >> (2 * sh)
            atom = atom * max(ngroups, 1) + (multi[tax] >> (2 * sh))
    return f.average_atoms(atom)


def nilpotent_mart_diff(ns: NilSystem, f: GridSignal,
                        j: tuple[int, int, int], type_k: int) -> GridSignal:
    """Delta_j^(k): product over factors of E_(j-1) - E_j.  Type 3 is the
    conjugated type 2 operator, which the expansion tests verify equals the
    scale-j Haar projection."""
    _check_type(type_k)
    if f.grid != ns.grid:
        raise GridMismatch("signal does not live on the model grid")
    for s in j:
        _check_haar_scale(ns, s)
        if s == ns.avg_level:
            raise ScaleError("the boundary level is not a difference scale")
    if type_k == 3:
        inner = nilpotent_mart_diff(ns, ns.transport_adj(f, 3), j, 2)
        return ns.transport(inner, 3)
    g = f
    for mu in (1, 2, 3):
        s = j[mu - 1]
        g = _partial(ns, g, type_k, mu, s - 1) - _partial(ns, g, type_k, mu, s)
    return g


def nilpotent_level_diff(ns: NilSystem, f: GridSignal, base: int,
                         mu: int, level: int) -> GridSignal:
    """One-parameter extended slice: the boundary average at the sentinel,
    otherwise E_(level-1) - E_level."""
    _check_haar_scale(ns, level)
    if level == ns.avg_level:
        return _partial(ns, f, base, mu, ns.top_scale)
    return (_partial(ns, f, base, mu, level - 1)
            - _partial(ns, f, base, mu, level))


def _detail_tree(ns: NilSystem, g: GridSignal, base: int) -> dict:
    """All extended-triple details of g, keyed by level triple.

    Expectations at each level are computed once per branch and reused, so
    the full tree costs about two averages per node instead of six.
    """
    sigs: dict[tuple, GridSignal] = {(): g}
    for mu in (1, 2, 3):
        nxt: dict[tuple, GridSignal] = {}
        for key, h in sigs.items():
            cache = {ns.cell_scale: h}

            def expect(s, h=h, cache=cache):
                if s not in cache:
                    cache[s] = _partial(ns, h, base, mu, s)
                return cache[s]

            for lv in extended_levels(ns):
                if lv == ns.avg_level:
                    d = expect(ns.top_scale)
                else:
                    d = expect(lv - 1) - expect(lv)
                nxt[key + (lv,)] = d
        sigs = nxt
    return sigs


# ---- tight frame and square functions ----

@dataclass
class NilFrameReport:
    type_energies: dict[int, DR]
    energy: DR
    denominator: DR
    ratio: Fraction | None
    reconstruction: GridSignal
    tight: bool


def nilpotent_frame(ns: NilSystem, f: GridSignal) -> NilFrameReport:
    """Coefficient energy and (1/3)-reconstruction across the three types.

    Details are summed over every extended level triple except the excluded
    all-average one.  The type 3 branch computes in transported coordinates:
    conjugation by the shear permutes cells, so it preserves every norm and
    commutes with the final sum.
    """
    if f.grid != ns.grid or f.mode != EXACT:
        raise GridMismatch("the frame needs an exact signal on the model grid")
    triples = extended_triples(ns)
    energies: dict[int, DR] = {}
    recon_sum = GridSignal.zeros(ns.grid, EXACT)
    for k in NIL_TYPES:
        base = 2 if k == 3 else k
        g = ns.transport_adj(f, k)
        details = _detail_tree(ns, g, base)
        ek = DR.zero()
        rk = GridSignal.zeros(ns.grid, EXACT)
        for t in triples:
            d = details[t]
            ek = ek + l2_norm_sq(d)
            rk = rk + d
        energies[k] = ek
        recon_sum = recon_sum + ns.transport(rk, k)
    energy = DR.zero()
    for e in energies.values():
        energy = energy + e
    recon = recon_sum.divide_exact(3)
    centered = f.sub_mean()
    denom = l2_norm_sq(centered)
    ratio = None
    if not denom.is_zero:
        ratio = energy.as_fraction() / denom.as_fraction()
    tight = energy == denom * 3 and recon.equals(centered)
    return NilFrameReport(energies, energy, denom, ratio, recon, tight)


def nilpotent_square_fn_sq(ns: NilSystem, f: GridSignal, type_k: int) -> GridSignal:
    """Squared square function: sum of squared details over the extended
    level triples.  The type 3 value is the transported type 2 value of the
    transported signal; cell permutation commutes with cellwise squares, so
    this is the definitional computation, not a shortcut."""
    _check_type(type_k)
    if f.grid != ns.grid:
        raise GridMismatch("signal does not live on the model grid")
    base = 2 if type_k == 3 else type_k
    g = ns.transport_adj(f, type_k)
    details = _detail_tree(ns, g, base)
    acc = GridSignal.zeros(ns.grid, f.mode)
    for t in extended_triples(ns):
        acc = acc + details[t].pointwise_sq()
    return ns.transport(acc, type_k)


def nilpotent_square_fn(ns: NilSystem, f: GridSignal, type_k: int) -> GridSignal:
    sq = nilpotent_square_fn_sq(ns, f, type_k)
    return GridSignal(ns.grid, FLOAT, np.sqrt(sq.to_float_array()))


def nilpotent_square_fn_dyadic_sq(ns: NilSystem, f: GridSignal,
                                  type_k: int) -> GridSignal:
    """Independent route: per-index |coefficient|^2 spread over the element
    support.  Slow (it builds every element); meant for oracle tests."""
    if f.grid != ns.grid or f.mode != EXACT:
        raise GridMismatch("the dyadic route needs an exact signal")
    coeffs = nilpotent_analyze(ns, f, type_k)
    n = ns.grid.ncells
    acc_a = np.zeros(n, dtype=object)
    ea = [None]
    acc_b = np.zeros(n, dtype=object)
    eb = [None]

    def add(acc, eref, mant, exp, mask):
        if mant == 0:
            return
        if eref[0] is None:
            eref[0] = exp
        if exp < eref[0]:
            np.multiply(acc, 1 << (eref[0] - exp), out=acc)
            eref[0] = exp
        acc[mask] += mant << (exp - eref[0])

    for idx, c in coeffs.data.items():
        pat, vexp = nil_haar_pattern(ns, idx)
        mask = pat != 0
        w = (c * c).mul_pow2(-vexp)       # |c|^2 |h|^2 on the support
        add(acc_a, ea, w.mantissa, w.exponent, mask)
        add(acc_b, eb, w.root_mantissa, w.root_exponent, mask)
    return GridSignal(ns.grid, EXACT, acc_a, ea[0] or 0, acc_b, eb[0] or 0)


def nil_p2_identity(ns: NilSystem, f: GridSignal, type_k: int) -> tuple[DR, DR]:
    """Integral of the squared square function against the centered energy."""
    sq = nilpotent_square_fn_sq(ns, f, type_k)
    return sq.total(), l2_norm_sq(f.sub_mean())


# ---- fast full analysis and synthesis ----

@dataclass
class NilCoefficients:
    type_k: int
    data: dict[NilpotentHaarIndex, DR]

    def sorted_items(self):
        return sorted(self.data.items(), key=lambda kv: kv[0])

    def energy(self) -> DR:
        out = DR.zero()
        for c in self.data.values():
            out = out + c * c
        return out


def _triple_groups(ns: NilSystem, base: int, triple) -> tuple[list[int], int]:
    """Per-axis child-group sizes and the element volume exponent."""
    groups = [1] * ns.grid.ndim
    vol = 0
    for mu in (1, 2, 3):
        zax, tax = ns.factor_axes(base, mu)
        s = triple[mu - 1]
        if s == ns.avg_level:
            for a in zax:
                groups[a] = ns.grid.shape[a]
                vol += ns.top_scale
            if tax is not None:
                groups[tax] = ns.grid.shape[tax]
                vol += 2 * ns.top_scale + ns.kappa
            continue
        for a in zax:
            groups[a] = 1 << (s - ns.cell_scale - 1)
            vol += s
        if tax is not None:
            groups[tax] = 1 << (2 * (s - ns.cell_scale) - 2)
            vol += 2 * s + ns.kappa
    return groups, vol


def _factor_corner_spec(ns: NilSystem, base: int, mu: int, s: int):
    """Positions, eps values, child corners and sign table for one factor."""
    d = ns.dims[mu - 1]
    paired = _PAIRING[base].get(mu) is not None
    if s == ns.avg_level:
        return [()], [0], [()], {0: {(): 1}}
    nsp = 1 << (ns.top_scale - s)
    pos = list(itertools.product(range(nsp), repeat=d))
    corners = list(itertools.product((0, 1), repeat=d))
    if paired:
        pos = [p + (c,) for p in pos for c in range(nsp * nsp)]
        corners = [c + (q,) for c in corners for q in range(4)]
    eps_all = list(range(1, _eps_bound(d, paired)))
    table = {e: {c: _walsh_sign(d, e, c) for c in corners} for e in eps_all}
    return pos, eps_all, corners, table


def _child_multi(ns: NilSystem, base: int, triple, pos3, corner3):
    """Child multi-index across all axes for one position/corner combo."""
    multi = [0] * ns.grid.ndim
    for mu in (1, 2, 3):
        zax, tax = ns.factor_axes(base, mu)
        s = triple[mu - 1]
        if s == ns.avg_level:
            continue
        p = pos3[mu - 1]
        c = corner3[mu - 1]
        d = ns.dims[mu - 1]
        for i, a in enumerate(zax):
            multi[a] = 2 * p[i] + c[i]
        if tax is not None:
            multi[tax] = 4 * p[d] + c[d]
    return tuple(multi)


def nilpotent_analyze(ns: NilSystem, f: GridSignal, type_k: int,
                      triples=None) -> NilCoefficients:
    """All coefficients of one system over the extended level triples,
    computed exactly through per-axis child sums."""
    _check_type(type_k)
    if f.grid != ns.grid or f.mode != EXACT:
        raise GridMismatch("analyze needs an exact signal on the model grid")
    base = 2 if type_k == 3 else type_k
    g = ns.transport_adj(f, type_k)
    a, ea, b, eb = g.components()
    cve = ns.grid.cell_volume_exp
    data: dict[NilpotentHaarIndex, DR] = {}
    for triple in (triples if triples is not None else extended_triples(ns)):
        for s in triple:
            _check_haar_scale(ns, s)
        groups, vexp = _triple_groups(ns, base, triple)
        Ca = _group_sums(a, ns.grid.shape, groups)
        Cb = _group_sums(b, ns.grid.shape, groups) if b is not None else None
        cshape = Ca.shape
        flatA = Ca.reshape(-1)
        flatB = Cb.reshape(-1) if Cb is not None else None
        norm = DR.sqrt_pow2(-vexp)
        specs = [_factor_corner_spec(ns, base, mu, triple[mu - 1])
                 for mu in (1, 2, 3)]
        for pos3 in itertools.product(*(sp[0] for sp in specs)):
            vals = {}
            for corner3 in itertools.product(*(sp[2] for sp in specs)):
                fi = int(np.ravel_multi_index(
                    _child_multi(ns, base, triple, pos3, corner3), cshape))
                vals[corner3] = (flatA[fi],
                                 flatB[fi] if flatB is not None else 0)
            for eps3 in itertools.product(*(sp[1] for sp in specs)):
                ra = 0
                rb = 0
                for corner3, (va, vb) in vals.items():
                    sg = (specs[0][3][eps3[0]][corner3[0]]
                          * specs[1][3][eps3[1]][corner3[1]]
                          * specs[2][3][eps3[2]][corner3[2]])
                    ra += sg * va
                    rb += sg * vb
                idx = NilpotentHaarIndex(type_k, tuple(triple), pos3, eps3)
                val = DR(ra, ea + cve) * norm
                if rb:
                    val = val + DR(0, 0, rb, eb + cve) * norm
                data[idx] = val
    return NilCoefficients(type_k, data)


def _support_pattern(ns: NilSystem, idx: NilpotentHaarIndex):
    """Support slices and block-shaped sign array (product structure)."""
    base = 2 if idx.type_k == 3 else idx.type_k
    slices: list = [None] * ns.grid.ndim
    vecs: list = [None] * ns.grid.ndim
    for mu in (1, 2, 3):
        zax, tax = ns.factor_axes(base, mu)
        s, p, e = idx.scales[mu - 1], idx.pos[mu - 1], idx.eps[mu - 1]
        d = ns.dims[mu - 1]
        if s == ns.avg_level:
            for a in zax:
                slices[a] = slice(0, ns.grid.shape[a])
                vecs[a] = np.ones(ns.grid.shape[a], dtype=np.int64)
            if tax is not None:
                slices[tax] = slice(0, ns.grid.shape[tax])
                vecs[tax] = np.ones(ns.grid.shape[tax], dtype=np.int64)
            continue
        w = 1 << (s - ns.cell_scale)
        for i, a in enumerate(zax):
            lo = p[i] * w
            slices[a] = slice(lo, lo + w)
            v = np.ones(w, dtype=np.int64)
            if (e >> i) & 1:
                v[w // 2:] = -1
            vecs[a] = v
        if tax is not None:
            wc = 1 << (2 * (s - ns.cell_scale))
            qw = wc // 4
            lo = p[d] * wc
            slices[tax] = slice(lo, lo + wc)
            v = np.empty(wc, dtype=np.int64)
            for q in range(4):
                v[q * qw:(q + 1) * qw] = _walsh_sign(d, e, (0,) * d + (q,))
            vecs[tax] = v
    sign = vecs[0]
    for v in vecs[1:]:
        sign = np.multiply.outer(sign, v)
    return tuple(slices), sign


def nilpotent_synthesize(ns: NilSystem, coeffs: NilCoefficients) -> GridSignal:
    """Exact sum of coefficient times element over the container."""
    shape = ns.grid.shape
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
        _, vexp = _triple_groups(ns, 2 if idx.type_k == 3 else idx.type_k,
                                 idx.scales)
        val = c * DR.sqrt_pow2(-vexp)
        slices, sign = _support_pattern(ns, idx)
        add(acc_a, acc_ea, slices, sign, val.mantissa, val.exponent)
        add(acc_b, acc_eb, slices, sign, val.root_mantissa, val.root_exponent)
    out = GridSignal(ns.grid, EXACT, acc_a.reshape(-1), acc_ea[0] or 0,
                     acc_b.reshape(-1), acc_eb[0] or 0)
    return ns.transport(out, coeffs.type_k)


# ---- THC1 extension with a type column and a three-scale index ----

def _pos_token(pos: tuple[int, ...]) -> str:
    return ",".join(str(p) for p in pos) if pos else "-"


def _parse_pos(tok: str) -> tuple[int, ...]:
    return () if tok == "-" else tuple(int(p) for p in tok.split(","))


def write_nil_thc1(ns: NilSystem, coeffs: NilCoefficients, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("THC1\n")
        fh.write("family: nil\n")
        fh.write(f"type: {coeffs.type_k}\n")
        fh.write(f"dims: {','.join(str(d) for d in ns.dims)}\n")
        fh.write(f"kappa: {ns.kappa}\n")
        fh.write(f"window: {ns.cell_scale},{ns.top_scale}\n")
        for idx, c in coeffs.sorted_items():
            fh.write(" ".join([str(s) for s in idx.scales]
                              + [_pos_token(p) for p in idx.pos]
                              + [str(e) for e in idx.eps]) + " "
                     + c.to_tokens() + "\n")


def read_nil_thc1(path) -> tuple[dict, NilCoefficients]:
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
    if header.get("family") != "nil":
        raise ValueError("not a nil coefficient file")
    type_k = int(header["type"])
    data = {}
    for ln in body:
        toks = ln.split()
        idx = NilpotentHaarIndex(
            type_k, tuple(int(t) for t in toks[0:3]),
            tuple(_parse_pos(t) for t in toks[3:6]),
            tuple(int(t) for t in toks[6:9]))
        data[idx] = DR.from_tokens(" ".join(toks[9:]))
    return header, NilCoefficients(type_k, data)


# ---- raw versus analytic comparability ----

def shard_central_box(ns: NilSystem, shard: AnalyticShard) -> tuple[DR, DR, DR, DR]:
    """Central footprint in measure units.  For types 1 and 2 this is the
    (t1, t2) rectangle of the product block; for type 3 the same rectangle
    read as the (u, v) = (t1 - t2, t2) window of the sheared region."""
    _check_shard(ns, shard)
    base = 2 if shard.type_k == 3 else shard.type_k
    spans = {}
    for mu in (1, 2, 3):
        t = _PAIRING[base].get(mu)
        if t is None:
            continue
        d = ns.dims[mu - 1]
        ln = DR.pow2(2 * shard.j[mu - 1] + ns.kappa)
        lo = ln * shard.pos[mu - 1][d]
        spans[t] = (lo, lo + ln)
    return (spans[0][0], spans[0][1], spans[1][0], spans[1][1])


def _scale_about(lo: DR, hi: DR, anchor: DR, e: int) -> tuple[DR, DR]:
    return (anchor + (lo - anchor).mul_pow2(e),
            anchor + (hi - anchor).mul_pow2(e))


def _uv_bounds(rects) -> tuple[DR, DR, DR, DR]:
    u_lo = min(p - s for p, q, r, s in rects)
    u_hi = max(q - r for p, q, r, s in rects)
    v_lo = min(r for _p, _q, r, _s in rects)
    v_hi = max(s for _p, _q, _r, s in rects)
    return u_lo, u_hi, v_lo, v_hi


def _t_bounds(rects) -> tuple[DR, DR, DR, DR]:
    return (min(r[0] for r in rects), max(r[1] for r in rects),
            min(r[2] for r in rects), max(r[3] for r in rects))


def comparability_check(ns: NilSystem, raw: FiberedRegion,
                        shard: AnalyticShard,
                        sigma_max: int = 10) -> tuple[int, int]:
    """Two-sided comparability constants between a raw fiber and the central
    region of an analytic shard.

    Both regions are re-anchored at their bounding-box centers.  c_in is the
    smallest power of two such that the analytic region shrunk by 1/c_in
    about its anchor sits inside the raw fiber; C_out is the smallest power
    of two whose dilate of the analytic region contains the raw fiber.
    Type 3 runs in the sheared frame, where both containment directions stay
    exact.  Bounding sizes off by more than the fixed same-scale bounds
    raise ScaleError; a single dyadic scale step already trips them.
    """
    if raw.central_dim != 2:
        raise ScaleError("the raw region must carry two central coordinates")
    rects = raw.fibers[min(raw.fibers)]
    box = shard_central_box(ns, shard)
    sheared = shard.type_k == 3
    bnds = _uv_bounds(rects) if sheared else _t_bounds(rects)
    gate = (Fraction(16), Fraction(4)) if sheared else (Fraction(4), Fraction(4))
    for axis, bound in enumerate(gate):
        sz_r = (bnds[2 * axis + 1] - bnds[2 * axis]).as_fraction()
        sz_a = (box[2 * axis + 1] - box[2 * axis]).as_fraction()
        ratio = max(sz_r / sz_a, sz_a / sz_r)
        if ratio > bound:
            raise ScaleError(
                f"regions are at mismatched scales (size ratio {ratio} on "
                f"central axis {axis})")
    ua = (box[0] + box[1]).mul_pow2(-1)
    va = (box[2] + box[3]).mul_pow2(-1)
    ur = (bnds[0] + bnds[1]).mul_pow2(-1)
    vr = (bnds[2] + bnds[3]).mul_pow2(-1)
    # translate the raw rects so the two anchors coincide (t-frame shift)
    du, dv = ua - ur, va - vr
    if sheared:
        shift = [(p + du + dv, q + du + dv, r + dv, s + dv)
                 for p, q, r, s in rects]
    else:
        shift = [(p + du, q + du, r + dv, s + dv) for p, q, r, s in rects]

    def scaled(e: int):
        u1, u2 = _scale_about(box[0], box[1], ua, e)
        v1, v2 = _scale_about(box[2], box[3], va, e)
        return (u1, u2, v1, v2)

    def inside_raw(b) -> bool:
        if sheared:
            return _sheared_box_in_pieces(shift, b)
        return _fiber_contains_box(shift, b)

    def contains_raw(b) -> bool:
        if sheared:
            return _pieces_in_sheared_box(shift, b)
        for p, q, r, s in shift:
            if p < b[0] or q > b[1] or r < b[2] or s > b[3]:
                return False
        return True

    c_in = next((1 << s for s in range(sigma_max + 1)
                 if inside_raw(scaled(-s))), None)
    c_out = next((1 << s for s in range(sigma_max + 1)
                  if contains_raw(scaled(s))), None)
    if c_in is None or c_out is None:
        raise ComparisonFailure(
            f"no power of two up to 2^{sigma_max} realizes both inclusions "
            f"(inner {c_in}, outer {c_out})")
    return c_in, c_out


def analytic_fibered_region(ns: NilSystem, shard: AnalyticShard) -> FiberedRegion:
    """The shard as a fibered region in measure units, one central rectangle
    per grid t2-row for type 3 so the sheared staircase form applies."""
    _check_shard(ns, shard)
    base = 2 if shard.type_k == 3 else shard.type_k
    boxes = []
    for mu in (1, 2, 3):
        zax, _tax = ns.factor_axes(base, mu)
        side = DR.pow2(shard.j[mu - 1])
        for i, _a in enumerate(zax):
            lo = side * shard.pos[mu - 1][i]
            boxes.append((lo, lo + side))
    u1, u2, v1, v2 = shard_central_box(ns, shard)
    key = (0,) * (ns.dims[0] + ns.dims[1])
    if shard.type_k != 3:
        fibers = {key: ((u1, u2, v1, v2),)}
    else:
        step = DR.pow2(2 * ns.cell_scale + ns.kappa)   # one grid row in t2
        rows = []
        v = v1
        while v < v2:
            rows.append((u1 + v, u2 + v, v, v + step))
            v = v + step
        fibers = {key: tuple(rows)}
    return FiberedRegion(tuple(ns.dims), (0, 0), tuple(boxes), 2, "t", fibers)
