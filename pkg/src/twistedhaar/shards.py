"""Stacked-tile and shard geometry for the quotient nilpotent model.

Everything here lives in unwrapped exact coordinates (not on the torus): the
tube inclusions compare genuine subsets of the group, so wrapping would be
wrong.  A point is (z, t1, t2) with z split across three spatial factors.

The basic objects, at scale j = (j1, j2, j3) with stacking exponent kappa:

  * stacked tile (one factor): spatial box [0, 2^j)^d, and over each spatial
    point a single central interval of length 2^(2j+kappa) anchored at
    2^(2j) * f_o(2^(-j) z) for a piecewise-constant profile f_o;
  * raw pre-shard: product of two stacked tiles and a plain spatial box, so
    each central fiber is an anchored rectangle with exact sides
    2^(2j1+kappa) x 2^(2j2+kappa);
  * raw shards, unions of central translates of the pre-shard, in three
    regimes (the standing convention is j2 <= j1):
      Case I   (j3 < j2):       2x2 block       -> fiber 2L1 x 2L2,
      Case II  (j2 < j3 < j1):  2 x 2N block    -> fiber 2L1 x 2NL2,
      Case III (j1 < j3):       diagonal stack  -> staircase of N rectangles,
    with L1 = 2^(2j1+kappa), L2 = 2^(2j2+kappa), L = L1, and N, M the
    squared scale gaps defined per case.

Case III is handled in t-coordinates throughout.  Its rectified frame
(u, v) = (t1 - t2, t2) fixes v and translates u within each v-slice, so
slice lengths, partition multiplicity and lattice periodicity transfer
verbatim; the rectified lattice (6L)Z x (2NL)Z corresponds to the t-frame
generators (6L, 0) and (2NL, 2NL).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dyadic import DyadicRational as DR
from .errors import ComparisonFailure, RegimeError, ResolutionError

MAX_TRANSLATES = 1 << 14


# ---- profiles ----

@dataclass(frozen=True)
class Profile:
    """Piecewise-constant function on the dyadic grid of [0,1)^d.

    res_exp r gives cells of side 2^-r; values are listed in C order over
    the (2^r)^d cells.
    """
    d: int
    res_exp: int
    values: tuple

    def __post_init__(self):
        if self.d < 1 or self.res_exp < 0:
            raise ResolutionError("profile needs d >= 1 and resolution exponent >= 0")
        if len(self.values) != (1 << self.res_exp) ** self.d:
            raise ResolutionError(
                f"profile carries {len(self.values)} values for a "
                f"{(1 << self.res_exp) ** self.d}-cell grid")

    @classmethod
    def zero(cls, d: int = 1) -> "Profile":
        return cls(d, 0, (DR.zero(),))

    @classmethod
    def staircase(cls, d: int, res_exp: int, seed: int, bound_exp: int = -10) -> "Profile":
        """Seeded profile with values m * 2^(bound_exp - 2), |m| <= 3.

        The default bound exponent keeps sup|f| <= 2^-10, which satisfies the
        strict profile bound even at kappa = 0.
        """
        # str seeds hash stably across processes; tuples do not
        rng = random.Random(f"staircase:{d}:{res_exp}:{seed}")
        n = (1 << res_exp) ** d
        vals = tuple(DR(rng.randint(-3, 3), bound_exp - 2) for _ in range(n))
        return cls(d, res_exp, vals)

    def cell_of(self, frac: Sequence[DR]) -> tuple[int, ...]:
        return tuple(v.floor_shifted(self.res_exp) for v in frac)

    def value(self, cell: tuple[int, ...]) -> DR:
        n = 1 << self.res_exp
        flat = 0
        for c in cell:
            if not (0 <= c < n):
                raise ResolutionError(f"profile cell {cell} out of range")
            flat = flat * n + c
        return self.values[flat]

    def sup_norm(self) -> DR:
        best = DR.zero()
        for v in self.values:
            mag = v if v.sign() >= 0 else -v
            if mag > best:
                best = mag
        return best


@dataclass(frozen=True)
class FactorSpec:
    """One Heisenberg-type factor: spatial dimension, profile, stacking exponent."""
    mu: int
    profile: Profile
    kappa: int
    d: int = 1
    strict: bool = False
    relaxed_flag: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.mu not in (1, 2, 3):
            raise RegimeError("factor index must be 1, 2 or 3")
        if self.profile.d != self.d:
            raise ResolutionError("profile dimension does not match the factor")
        bound = DR.pow2(self.kappa - 10)
        within = not (self.profile.sup_norm() > bound)
        if self.strict:
            if self.kappa < 10 or not within:
                raise RegimeError(
                    "strict mode needs kappa >= 10 and sup|profile| <= 2^(kappa-10)")
        else:
            if self.kappa < 0:
                raise RegimeError("kappa must be nonnegative")
            if not within:
                object.__setattr__(self, "relaxed_flag", True)


def make_factors(kappa: int, profiles: Sequence[Profile] | None = None,
                 d: tuple[int, int, int] = (1, 1, 1), strict: bool = False):
    profiles = profiles or [Profile.zero(dd) for dd in d]
    return tuple(FactorSpec(mu, profiles[mu - 1], kappa, d[mu - 1], strict)
                 for mu in (1, 2, 3))


# ---- fibered regions ----

Rect = tuple  # (u_lo, u_hi) for 1D fibers, (u_lo, u_hi, v_lo, v_hi) for 2D


def rect_area(r: Rect) -> DR:
    if len(r) == 2:
        return r[1] - r[0]
    return (r[1] - r[0]) * (r[3] - r[2])


def shift_rect(r: Rect, du: DR, dv: DR | None = None) -> Rect:
    if len(r) == 2:
        return (r[0] + du, r[1] + du)
    return (r[0] + du, r[1] + du, r[2] + dv, r[3] + dv)


@dataclass(frozen=True)
class FiberedRegion:
    """Spatial box cut into profile cells, with central fibers per cell.

    boxes lists (lo, hi) per spatial axis, factors in order.  Keys into
    fibers are flat tuples of per-axis cell indices over the profile-bearing
    axes (factor 3 never splits).  Fibers are disjoint half-open rectangles.
    """
    factor_axes: tuple[int, ...]          # axis count per factor
    splits: tuple[int, ...]               # per-factor cell resolution exponent
    boxes: tuple[tuple[DR, DR], ...]
    central_dim: int
    frame: str
    fibers: dict

    def split_axis_cells(self) -> list[int]:
        """Cells per axis, only over the split (profile-bearing) axes."""
        out = []
        for f, na in enumerate(self.factor_axes):
            if f < len(self.splits):
                out.extend([1 << self.splits[f]] * na)
        return out

    def cell_volume(self) -> DR:
        """Spatial volume of one profile cell (all cells are congruent)."""
        vol = DR.one()
        axis = 0
        for f, na in enumerate(self.factor_axes):
            r = self.splits[f] if f < len(self.splits) else 0
            for _ in range(na):
                lo, hi = self.boxes[axis]
                vol = vol * (hi - lo).mul_pow2(-r)
                axis += 1
        return vol

    def volume(self) -> DR:
        vol = DR.zero()
        cv = self.cell_volume()
        for rects in self.fibers.values():
            s = DR.zero()
            for r in rects:
                s = s + rect_area(r)
            vol = vol + cv * s
        return vol

    def translate(self, spatial: Sequence[DR] | None = None,
                  central: tuple[DR, ...] | None = None) -> "FiberedRegion":
        boxes = self.boxes
        if spatial is not None:
            boxes = tuple((lo + s, hi + s) for (lo, hi), s in zip(self.boxes, spatial))
        fibers = self.fibers
        if central is not None:
            du = central[0]
            dv = central[1] if self.central_dim == 2 else None
            fibers = {k: tuple(shift_rect(r, du, dv) for r in rects)
                      for k, rects in self.fibers.items()}
        return FiberedRegion(self.factor_axes, self.splits, boxes,
                             self.central_dim, self.frame, fibers)


def _box(j: int, d: int) -> list[tuple[DR, DR]]:
    side = DR.pow2(j)
    return [(DR.zero(), side) for _ in range(d)]


def _anchor(spec: FactorSpec, j: int, cell: tuple[int, ...]) -> DR:
    """Central anchor 2^(2j) * f_o at one profile cell of the scaled box."""
    return spec.profile.value(cell).mul_pow2(2 * j)


def _factor_cells(spec: FactorSpec) -> Iterable[tuple[int, ...]]:
    n = 1 << spec.profile.res_exp
    return itertools.product(range(n), repeat=spec.d)


def stacked_tile(spec: FactorSpec, j: int) -> FiberedRegion:
    """Scaled stacked tile of one factor: fibers are single intervals of
    exact length 2^(2j+kappa)."""
    ln = DR.pow2(2 * j + spec.kappa)
    fibers = {}
    for cell in _factor_cells(spec):
        a = _anchor(spec, j, cell)
        fibers[cell] = ((a, a + ln),)
    return FiberedRegion((spec.d,), (spec.profile.res_exp,),
                         tuple(_box(j, spec.d)), 1, "t", fibers)


def _check_specs(specs) -> int:
    if len(specs) != 3:
        raise RegimeError("three factor specs required")
    kappas = {s.kappa for s in specs}
    if len(kappas) != 1:
        raise RegimeError("factors must share one stacking exponent")
    return specs[0].kappa


def raw_pre_shard(specs, j: tuple[int, int, int]) -> FiberedRegion:
    """Product of two stacked tiles with the third spatial box; fibers are
    anchored rectangles with exact sides 2^(2j1+k) x 2^(2j2+k)."""
    kappa = _check_specs(specs)
    s1, s2, s3 = specs
    l1 = DR.pow2(2 * j[0] + kappa)
    l2 = DR.pow2(2 * j[1] + kappa)
    boxes = _box(j[0], s1.d) + _box(j[1], s2.d) + _box(j[2], s3.d)
    fibers = {}
    for c1 in _factor_cells(s1):
        a1 = _anchor(s1, j[0], c1)
        for c2 in _factor_cells(s2):
            a2 = _anchor(s2, j[1], c2)
            fibers[c1 + c2] = ((a1, a1 + l1, a2, a2 + l2),)
    return FiberedRegion((s1.d, s2.d, s3.d),
                         (s1.profile.res_exp, s2.profile.res_exp),
                         tuple(boxes), 2, "t", fibers)


def _case_of(j) -> int:
    j1, j2, j3 = j
    if j2 > j1:
        raise RegimeError("standing convention j2 <= j1 violated; swap factors first")
    if j3 < j2:
        return 1
    if j2 < j3 < j1:
        return 2
    if j1 < j3:
        return 3
    raise RegimeError(f"scales {j} fall in no admissible regime (ties are excluded)")


def _require_case(case: int, j) -> None:
    actual = _case_of(j)
    if actual != case:
        raise RegimeError(f"scales {j} belong to case {actual}, not case {case}")


def case_parameters(case: int, j, kappa: int) -> dict:
    j1, j2, j3 = j
    out = {"L1": DR.pow2(2 * j1 + kappa), "L2": DR.pow2(2 * j2 + kappa)}
    if case == 2:
        out["N"] = 1 << (2 * (j3 - j2))
    elif case == 3:
        out["L"] = out["L1"]
        out["M"] = 1 << (2 * (j1 - j2))
        out["N"] = 1 << (2 * (j3 - j1))
    return out


def raw_shard_intermediate(specs, j) -> FiberedRegion:
    """Case III intermediate block: 2 x 2M central translates, giving an
    exact 2L x 2L fiber."""
    _require_case(3, j)
    kappa = _check_specs(specs)
    par = case_parameters(3, j, kappa)
    L, L2, M = par["L"], par["L2"], par["M"]
    if 4 * M > MAX_TRANSLATES:
        raise RegimeError("scale gap too large for the desk translate budget")
    pre = raw_pre_shard(specs, j)
    fibers = {}
    for key, ((a1, _b1, a2, _b2),) in pre.fibers.items():
        fibers[key] = ((a1 - L, a1 + L, a2 - M * L2, a2 + M * L2),)
    return FiberedRegion(pre.factor_axes, pre.splits, pre.boxes, 2, "t", fibers)


def raw_shard(case: int, specs, j) -> FiberedRegion:
    """Union of central translates of the pre-shard, fibers merged into
    maximal half-open rectangles (a staircase of N rectangles in Case III)."""
    _require_case(case, j)
    kappa = _check_specs(specs)
    par = case_parameters(case, j, kappa)
    L1, L2 = par["L1"], par["L2"]
    pre = raw_pre_shard(specs, j)
    fibers = {}
    if case == 1:
        for key, ((a1, _h1, a2, _h2),) in pre.fibers.items():
            fibers[key] = ((a1 - L1, a1 + L1, a2 - L2, a2 + L2),)
    elif case == 2:
        N = par["N"]
        if 4 * N > MAX_TRANSLATES:
            raise RegimeError("scale gap too large for the desk translate budget")
        for key, ((a1, _h1, a2, _h2),) in pre.fibers.items():
            fibers[key] = ((a1 - L1, a1 + L1, a2 - N * L2, a2 + N * L2),)
    else:
        L, M, N = par["L"], par["M"], par["N"]
        if 12 * M * N > MAX_TRANSLATES:
            raise RegimeError("scale gap too large for the desk translate budget")
        mid = raw_shard_intermediate(specs, j)
        for key, ((u_lo, u_hi, v_lo, v_hi),) in mid.fibers.items():
            # widen by the two t1-neighbors, then stack N diagonal copies
            rects = []
            for m in range(-N, N - 1, 2):
                step = L * m
                rects.append((u_lo - 2 * L + step, u_hi + 2 * L + step,
                              v_lo + step, v_hi + step))
            fibers[key] = tuple(rects)
    return FiberedRegion(pre.factor_axes, pre.splits, pre.boxes, 2, "t", fibers)


def swap_factors(specs, j):
    """Exchange the first two factors (realizes the opposite scale order)."""
    s1, s2, s3 = specs
    ns1 = FactorSpec(1, s2.profile, s2.kappa, s2.d, s2.strict)
    ns2 = FactorSpec(2, s1.profile, s1.kappa, s1.d, s1.strict)
    return (ns1, ns2, s3), (j[1], j[0], j[2])


# ---- lattices ----

@dataclass(frozen=True)
class ShardLattice:
    case: int
    spatial_steps: tuple[DR, ...]                 # one step per spatial axis
    central_gens: tuple[tuple[DR, DR], tuple[DR, DR]]   # generators in t-frame
    rectified_steps: tuple[DR, DR] | None        # (u, v) periods, Case III

    def central_vector(self, p: int, q: int) -> tuple[DR, DR]:
        (a, b), (c, d) = self.central_gens
        return (a * p + c * q, b * p + d * q)


def shard_lattice(case: int, j, specs) -> ShardLattice:
    _require_case(case, j)
    kappa = _check_specs(specs)
    par = case_parameters(case, j, kappa)
    steps = []
    for spec, jm in zip(specs, j):
        steps.extend([DR.pow2(jm)] * spec.d)
    z = DR.zero()
    if case == 1:
        g1 = (2 * par["L1"], z)
        g2 = (z, 2 * par["L2"])
        rect = None
    elif case == 2:
        g1 = (2 * par["L1"], z)
        g2 = (z, 2 * par["N"] * par["L2"])
        rect = None
    else:
        L, N = par["L"], par["N"]
        g1 = (6 * L, z)
        g2 = (2 * N * L, 2 * N * L)   # rectified v-period, pulled back to t
        rect = (6 * L, 2 * N * L)
    return ShardLattice(case, tuple(steps), (g1, g2), rect)


# ---- exact overlays ----

def overlay_1d(intervals: Sequence[tuple[DR, DR]],
               window: tuple[DR, DR]) -> list[tuple[DR, DR, int]]:
    """Multiplicity segments of a family of half-open intervals over a window."""
    lo, hi = window
    cuts = {lo, hi}
    for a, b in intervals:
        if b > lo and a < hi:
            cuts.add(max(a, lo))
            cuts.add(min(b, hi))
    pts = sorted(cuts)
    out = []
    for a, b in zip(pts, pts[1:]):
        mult = sum(1 for x, y in intervals if x <= a and b <= y)
        out.append((a, b, mult))
    return out


def _int_normalize(values: list[DR]) -> list[int]:
    """Exact integer images of dyadic rationals at a common power-of-2 scale."""
    e0 = min((v.exponent for v in values if v.mantissa), default=0)
    out = []
    for v in values:
        if v.root_mantissa:
            raise RegimeError("irrational endpoint in an overlay")
        out.append(v.mantissa << (v.exponent - e0) if v.mantissa else 0)
    return out


def overlay_2d(rects: Sequence[Rect], window: Rect):
    """Multiplicity of a rectangle family over a rectangular window.

    Exact sweep over coordinate cuts (endpoints mapped to a common integer
    scale first); returns (min_mult, max_mult, cells) where cells lists
    ((u_lo,u_hi,v_lo,v_hi), mult) for every refined cell, endpoints as DR.
    """
    flat: list[DR] = list(window)
    for r in rects:
        flat.extend(r)
    ints = _int_normalize(flat)
    back = dict(zip(ints, flat))
    wu_lo, wu_hi, wv_lo, wv_hi = ints[:4]
    irects = [tuple(ints[4 + 4 * i:8 + 4 * i]) for i in range(len(rects))]
    ucuts = {wu_lo, wu_hi}
    vcuts = {wv_lo, wv_hi}
    live = []
    for r in irects:
        if r[1] > wu_lo and r[0] < wu_hi and r[3] > wv_lo and r[2] < wv_hi:
            live.append(r)
            ucuts.add(max(r[0], wu_lo))
            ucuts.add(min(r[1], wu_hi))
            vcuts.add(max(r[2], wv_lo))
            vcuts.add(min(r[3], wv_hi))
    us = sorted(ucuts)
    vs = sorted(vcuts)
    cells = []
    mn, mx = None, None
    for ua, ub in zip(us, us[1:]):
        row = [r for r in live if r[0] <= ua and ub <= r[1]]
        for va, vb in zip(vs, vs[1:]):
            mult = sum(1 for r in row if r[2] <= va and vb <= r[3])
            cells.append(((back[ua], back[ub], back[va], back[vb]), mult))
            mn = mult if mn is None else min(mn, mult)
            mx = mult if mx is None else max(mx, mult)
    return mn, mx, cells


# ---- partition verification ----

@dataclass
class PartitionReport:
    case: int
    window: Rect
    cells_checked: int
    translates_used: int
    min_mult: int
    max_mult: int
    failures: list

    @property
    def ok(self) -> bool:
        return self.min_mult == 1 and self.max_mult == 1


def verify_partition(case: int, specs, j, window: Rect | None = None,
                     lattice_override: tuple[tuple, tuple] | None = None) -> PartitionReport:
    """Overlay all central lattice translates of the raw shard over a central
    window, for every spatial profile cell; PASS iff multiplicity is 1
    everywhere.  lattice_override substitutes broken generators (negative
    control)."""
    shard = raw_shard(case, specs, j)
    lat = shard_lattice(case, j, specs)
    gens = lat.central_gens
    if lattice_override is not None:
        gens = tuple(tuple(v if isinstance(v, DR) else DR.from_int(v) for v in g)
                     for g in lattice_override)

    if window is None:
        (a, b), (c, d) = lat.central_gens
        pu = a if not a.is_zero else c
        pv = d if not d.is_zero else b
        window = (-pu, pu, -pv, pv)

    failures = []
    mn_all, mx_all = None, None
    translates = 0
    for key, rects in shard.fibers.items():
        u_lo = min(r[0] for r in rects)
        u_hi = max(r[1] for r in rects)
        v_lo = min(r[2] for r in rects)
        v_hi = max(r[3] for r in rects)
        spans = _translate_range(gens, (u_lo, u_hi, v_lo, v_hi), window)
        tiled = []
        for p, q in spans:
            du = gens[0][0] * p + gens[1][0] * q
            dv = gens[0][1] * p + gens[1][1] * q
            for r in rects:
                tiled.append((r[0] + du, r[1] + du, r[2] + dv, r[3] + dv))
        translates = max(translates, len(spans))
        mn, mx, cells = overlay_2d(tiled, window)
        mn_all = mn if mn_all is None else min(mn_all, mn)
        mx_all = mx if mx_all is None else max(mx_all, mx)
        if mn != 1 or mx != 1:
            bad = [(cell, m) for cell, m in cells if m != 1]
            failures.append((key, bad[:4]))
    return PartitionReport(case, window, len(shard.fibers), translates,
                           mn_all, mx_all, failures)


def _translate_range(gens, bbox, window):
    """Lattice index pairs whose translate of bbox can meet the window."""
    (g1u, g1v), (g2u, g2v) = gens
    det = g1u * g2v - g1v * g2u
    if det.is_zero:
        raise RegimeError("degenerate lattice generators")
    spans = []
    # conservative bounds: solve the two generator combinations over the
    # corner offsets, then pad by one step on each side
    u_needs = (window[0] - bbox[1], window[1] - bbox[0])
    v_needs = (window[2] - bbox[3], window[3] - bbox[2])
    corners = []
    inv = [[g2v, -g2u], [-g1v, g1u]]   # adj(G)^T scaled by det
    for uu in u_needs:
        for vv in v_needs:
            pn = inv[0][0] * uu + inv[0][1] * vv
            qn = inv[1][0] * uu + inv[1][1] * vv
            corners.append((pn, qn))
    sd = det.sign()
    ps = [c[0] if sd > 0 else -c[0] for c in corners]
    qs = [c[1] if sd > 0 else -c[1] for c in corners]
    mag = det if sd > 0 else -det
    p_lo, p_hi = _div_floor(min(ps), mag) - 1, _div_ceil(max(ps), mag) + 1
    q_lo, q_hi = _div_floor(min(qs), mag) - 1, _div_ceil(max(qs), mag) + 1
    if (p_hi - p_lo + 1) * (q_hi - q_lo + 1) > MAX_TRANSLATES:
        raise RegimeError("window spans too many lattice periods")
    for p in range(p_lo, p_hi + 1):
        for q in range(q_lo, q_hi + 1):
            spans.append((p, q))
    return spans


def _div_floor(x: DR, d: DR) -> int:
    fx, fd = x.as_fraction(), d.as_fraction()
    return (fx / fd).__floor__()


def _div_ceil(x: DR, d: DR) -> int:
    fx, fd = x.as_fraction(), d.as_fraction()
    return -((-fx / fd).__floor__())


# ---- model tubes and the comparability exponent ----

@dataclass(frozen=True)
class TubeModel:
    """Axis-aligned (regimes i, ii) or u-sheared (regime iii) model region.

    Central halfwidths pair the first central scale 2^(2 j1) with 2^(2 j2)
    in regime i and 2^(2 j3) in regimes ii and iii; regime iii reads its box
    in the rectified coordinates (u, v) = (t1 - t2, t2).
    """
    regime: int
    j: tuple[int, int, int]
    sigma: int
    spatial_center: tuple
    central_center: tuple[DR, DR]

    def spatial_halfwidth(self, mu: int) -> DR:
        return DR.pow2(self.j[mu - 1] + self.sigma)

    def central_halfwidths(self) -> tuple[DR, DR]:
        j1, j2, j3 = self.j
        second = j2 if self.regime == 1 else j3
        return (DR.pow2(2 * (j1 + self.sigma)), DR.pow2(2 * (second + self.sigma)))


def zeta_shift(specs, j) -> list[DR]:
    """Spatial inner-tube centering shift, 2^(j_mu - 1) on every spatial axis."""
    out = []
    for spec, jm in zip(specs, j):
        out.extend([DR.pow2(jm - 1)] * spec.d)
    return out


@dataclass
class TubeSigmaReport:
    sigma: int
    inner_sigma: int
    outer_sigma: int

    @property
    def inner_slack(self) -> int:
        return self.sigma - self.inner_sigma

    @property
    def outer_slack(self) -> int:
        return self.sigma - self.outer_sigma


def tube_sigma(case: int, specs, j, shard: FiberedRegion | None = None,
               lattice_point: tuple[DR, DR] | None = None,
               sigma_max: int = 10) -> TubeSigmaReport:
    """Minimal sigma >= 1 with tube(center+zeta, j-sigma) inside the shard
    inside tube(base, j+sigma); raises ComparisonFailure past sigma_max."""
    _require_case(case, j)
    if shard is None:
        shard = raw_shard(case, specs, j)
    cen = lattice_point or (DR.zero(), DR.zero())

    inner_sigma = None
    outer_sigma = None
    for sigma in range(1, sigma_max + 1):
        if inner_sigma is None and _inner_ok(case, specs, j, shard, cen, sigma):
            inner_sigma = sigma
        if outer_sigma is None and _outer_ok(case, specs, j, shard, cen, sigma):
            outer_sigma = sigma
        if inner_sigma is not None and outer_sigma is not None:
            return TubeSigmaReport(max(inner_sigma, outer_sigma), inner_sigma, outer_sigma)
    raise ComparisonFailure(
        f"no sigma <= {sigma_max} realizes both tube inclusions "
        f"(inner {inner_sigma}, outer {outer_sigma})")


def _central_widths(case: int, j, sigma: int) -> tuple[DR, DR]:
    j1, j2, j3 = j
    second = j2 if case == 1 else j3
    return DR.pow2(2 * (j1 + sigma)), DR.pow2(2 * (second + sigma))


def _inner_ok(case, specs, j, shard, cen, sigma) -> bool:
    """tube(center + zeta, 2^(j - sigma)) inside the shard, checked cellwise."""
    zeta = zeta_shift(specs, j)
    halves = []
    for spec, jm in zip(specs, j):
        halves.extend([DR.pow2(jm - sigma)] * spec.d)
    # spatial box of the inner tube, per axis
    spatial = []
    for (lo, hi), zc, w in zip(shard.boxes, zeta, halves):
        c = lo + zc
        a, b = c - w, c + w
        if a < lo or b > hi:
            return False
        spatial.append((a, b))
    wu, wv = _central_widths(case, j, -sigma)
    box = (cen[0] - wu, cen[0] + wu, cen[1] - wv, cen[1] + wv)
    for key in _touched_cells(shard, spatial):
        if case == 3:
            if not _sheared_box_in_pieces(shard.fibers[key], box):
                return False
        elif not _fiber_contains_box(shard.fibers[key], box):
            return False
    return True


def _outer_ok(case, specs, j, shard, cen, sigma) -> bool:
    """Shard inside tube(base, 2^(j + sigma)): spatial and fiber bounds."""
    halves = []
    for spec, jm in zip(specs, j):
        halves.extend([DR.pow2(jm + sigma)] * spec.d)
    bases = [lo for lo, _hi in shard.boxes]
    for (lo, hi), b, w in zip(shard.boxes, bases, halves):
        if lo < b - w or hi > b + w:
            return False
    wu, wv = _central_widths(case, j, sigma)
    box = (cen[0] - wu, cen[0] + wu, cen[1] - wv, cen[1] + wv)
    for rects in shard.fibers.values():
        if case == 3:
            if not _pieces_in_sheared_box(rects, box):
                return False
        else:
            for r in rects:
                if r[0] < box[0] or r[1] > box[1] or r[2] < box[2] or r[3] > box[3]:
                    return False
    return True


def _touched_cells(shard: FiberedRegion, spatial) -> list:
    """Keys of profile cells meeting a spatial sub-box (exact interval tests)."""
    per_axis = []
    axis = 0
    for f, na in enumerate(shard.factor_axes):
        r = shard.splits[f] if f < len(shard.splits) else 0
        for _ in range(na):
            lo, hi = shard.boxes[axis]
            a, b = spatial[axis]
            if f < len(shard.splits):
                side = (hi - lo).mul_pow2(-r)
                idxs = []
                for c in range(1 << r):
                    c_lo = lo + side * c
                    c_hi = c_lo + side
                    if b > c_lo and a < c_hi:
                        idxs.append(c)
                per_axis.append(idxs)
            axis += 1
    return [tuple(t) for t in itertools.product(*per_axis)] if per_axis else [()]


def _fiber_contains_box(rects, box) -> bool:
    """Does the fiber (a disjoint union of rectangles) contain the box?

    Checked by exact area: the box is inside iff its intersections with the
    rects have areas summing to the box area (disjointness makes areas add).
    """
    target = rect_area(box)
    got = DR.zero()
    for r in rects:
        u = min(r[1], box[1]) - max(r[0], box[0])
        v = min(r[3], box[3]) - max(r[2], box[2])
        if u.sign() > 0 and v.sign() > 0:
            got = got + u * v
    return got == target


def _sheared_box_in_pieces(rects, box) -> bool:
    """Is the sheared region {t2 in [v_lo,v_hi), t1 - t2 in [u_lo,u_hi)}
    inside the union of t-frame rectangles?

    The rects have disjoint t2-bands (staircase).  Within a band [r,s) the
    slice needs t2 + u_lo >= p and t2 + u_hi <= q at the extreme t2 values,
    and the band overlaps must cover [v_lo, v_hi) exactly.
    """
    u_lo, u_hi, v_lo, v_hi = box
    covered = DR.zero()
    for p, q, r, s in rects:
        t2_inf = max(r, v_lo)
        t2_sup = min(s, v_hi)
        if not (t2_sup > t2_inf):
            continue
        if t2_inf + u_lo < p or t2_sup + u_hi > q:
            return False
        covered = covered + (t2_sup - t2_inf)
    return covered == v_hi - v_lo


def _pieces_in_sheared_box(rects, box) -> bool:
    """Is every t-frame rectangle inside the sheared region
    {(t1,t2): t2 in [v_lo,v_hi), t1 - t2 in [u_lo,u_hi)}?

    For a rect [p,q) x [r,s): u = t1 - t2 spans (p - s, q - r); containment
    holds iff u_lo <= p - s and q - r <= u_hi, plus the v-interval check.
    """
    u_lo, u_hi, v_lo, v_hi = box
    for p, q, r, s in rects:
        if r < v_lo or s > v_hi:
            return False
        if p - s < u_lo or q - r > u_hi:
            return False
    return True


# ---- FBR1 region files ----

def _dr_tok(x: DR) -> str:
    return x.to_tokens().replace(" ", ":")


def _dr_untok(tok: str) -> DR:
    return DR.from_tokens(tok.replace(":", " "))


def write_fbr1(region: FiberedRegion, path, label: str = "region") -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("FBR1\n")
        fh.write(f"label: {label}\n")
        fh.write(f"factors: {','.join(str(n) for n in region.factor_axes)}\n")
        fh.write(f"splits: {','.join(str(s) for s in region.splits)}\n")
        fh.write(f"frame: {region.frame}\n")
        fh.write(f"centralDim: {region.central_dim}\n")
        fh.write("box: " + ";".join(f"{_dr_tok(lo)},{_dr_tok(hi)}"
                                    for lo, hi in region.boxes) + "\n")
        for key in sorted(region.fibers):
            ktok = ",".join(str(c) for c in key) if key else "-"
            for r in region.fibers[key]:
                fh.write(f"cell {ktok} " + " ".join(_dr_tok(x) for x in r) + "\n")


def read_fbr1(path) -> tuple[dict, FiberedRegion]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if lines[0] != "FBR1":
        raise ValueError("not an FBR1 file")
    header = {}
    fibers: dict = {}
    boxes = None
    for ln in lines[1:]:
        if ln.startswith("cell "):
            _, ktok, *toks = ln.split()
            key = () if ktok == "-" else tuple(int(c) for c in ktok.split(","))
            fibers.setdefault(key, []).append(tuple(_dr_untok(t) for t in toks))
        else:
            k, _, v = ln.partition(":")
            header[k.strip()] = v.strip()
            if k.strip() == "box":
                boxes = tuple(tuple(_dr_untok(t) for t in pair.split(","))
                              for pair in v.strip().split(";"))
    region = FiberedRegion(
        tuple(int(n) for n in header["factors"].split(",")),
        tuple(int(s) for s in header["splits"].split(",")) if header["splits"] else (),
        boxes, int(header["centralDim"]), header["frame"],
        {k: tuple(v) for k, v in fibers.items()})
    return header, region
