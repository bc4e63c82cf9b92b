"""Bi-parameter martingale structure attached to the three Haar systems.

Scale convention (stated once, used everywhere): the conditional expectation
at scale k averages over dyadic cubes of side 2^-k, so larger k conditions on
a finer sigma-algebra.  On axes with extent exponent L and resolution exponent
K the resolvable scales are -L <= k <= K; k = K is the identity and k = -L is
the full average in that parameter.  The sentinel k = -L-1 (the boundary level
of the Haar systems) is accepted as an alias for the full average.

For systems 2 and 3 the filtration is the shear image of the rectangular one:
E^(i) = U_i E U_i*.  That conjugation is the production path; an independent
oracle averages directly over the slanted atoms.

The two-parameter martingale difference is the four-corner combination

    D_(k1,k2) = (E_(k1+1,k2+1) - E_(k1,k2+1)) - (E_(k1+1,k2) - E_(k1,k2)),

a product of one-parameter differences in commuting directions.  Summing the
per-parameter telescopes, with the full average as the boundary term, gives
f - mean = sum of D over the extended level pairs, which is the decomposition
behind the square functions below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicRational as DR
from .errors import GridMismatch, ScaleError
from .grid import EXACT, FLOAT, GridSignal, l2_norm_sq, lp_norm, random_signal
from .haar import EuclidSystem, ScaleRange, coefficient, enumerate_indices, haar_norm, haar_pattern

SYSTEMS = (1, 2, 3)


def _check_scale(sys: EuclidSystem, k: int, top: int) -> None:
    if k == sys.avg_level:
        return
    if not (sys.k_min <= k <= top):
        raise ScaleError(f"scale {k} outside [{sys.k_min},{top}]")


def partial_expectation(sys: EuclidSystem, f: GridSignal, param: int, k: int) -> GridSignal:
    """Average over dyadic cubes of side 2^-k in one parameter block."""
    if param not in (1, 2):
        raise ScaleError("param must be 1 or 2")
    _check_scale(sys, k, sys.res_exp)
    s = (sys.extent_exp + sys.res_exp if k == sys.avg_level
         else sys.res_exp - k)
    return f.average_groups({axis: s for axis in sys.block_axes(param)})


def cond_expect(sys: EuclidSystem, f: GridSignal, ks: tuple[int, int],
                system: int = 1) -> GridSignal:
    """Two-parameter conditional expectation; systems 2,3 by conjugation."""
    g = sys.transport_adj(f, system)
    g = partial_expectation(sys, g, 1, ks[0])
    g = partial_expectation(sys, g, 2, ks[1])
    return sys.transport(g, system)


def cond_expect_direct(sys: EuclidSystem, f: GridSignal, ks: tuple[int, int],
                       system: int = 1) -> GridSignal:
    """Oracle path: average over the (possibly slanted) atoms themselves."""
    for k in ks:
        _check_scale(sys, k, sys.res_exp)
    op = sys.pull(system)
    n = sys.grid.ncells
    perm = op.perm if op is not None else np.arange(n, dtype=np.int64)
    multi = np.unravel_index(perm, sys.grid.shape)
    atom = np.zeros(n, dtype=np.int64)
    for block, k in ((1, ks[0]), (2, ks[1])):
        s = (sys.extent_exp + sys.res_exp if k == sys.avg_level
             else sys.res_exp - k)
        for axis in sys.block_axes(block):
            ngroups = sys.grid.shape[axis] >> s
            atom = atom * max(ngroups, 1) + (multi[axis] >> s)
    return f.average_atoms(atom)


def mart_diff(sys: EuclidSystem, f: GridSignal, ks: tuple[int, int],
              system: int = 1) -> GridSignal:
    """Four-corner martingale difference at a regular scale pair."""
    for k in ks:
        if not (sys.k_min <= k <= sys.k_max):
            raise ScaleError(
                f"difference needs both k and k+1 resolvable; {k} is outside "
                f"[{sys.k_min},{sys.k_max}]")
    g = sys.transport_adj(f, system)
    g = level_diff(sys, g, 1, ks[0])
    g = level_diff(sys, g, 2, ks[1])
    return sys.transport(g, system)


def level_diff(sys: EuclidSystem, f: GridSignal, param: int, level: int) -> GridSignal:
    """One-parameter building block: E_(k+1) - E_k, or the full average at
    the boundary level."""
    if level == sys.avg_level:
        return partial_expectation(sys, f, param, level)
    return (partial_expectation(sys, f, param, level + 1)
            - partial_expectation(sys, f, param, level))


# ---- square functions ----

def square_fn_mart_sq(sys: EuclidSystem, f: GridSignal, system: int = 1,
                      window: ScaleRange | None = None) -> GridSignal:
    """Sum of squared martingale differences over the extended level pairs.

    Conjugation by U_i commutes with pointwise squares, so the system-i sum
    is the transported system-1 sum of the transported input; that is the
    definitional computation, just factored through one permutation.
    """
    window = window or ScaleRange.full(sys)
    g = sys.transport_adj(f, system)
    acc = GridSignal.zeros(sys.grid, f.mode)
    for l1 in window.levels(sys, 1):
        g1 = level_diff(sys, g, 1, l1)
        for l2 in window.levels(sys, 2):
            if l1 == sys.avg_level and l2 == sys.avg_level:
                continue
            d = level_diff(sys, g1, 2, l2)
            acc = acc + d.pointwise_sq()
    return sys.transport(acc, system)


def square_fn_mart(sys: EuclidSystem, f: GridSignal, system: int = 1,
                   window: ScaleRange | None = None) -> GridSignal:
    sq = square_fn_mart_sq(sys, f, system, window)
    return GridSignal(sys.grid, FLOAT, np.sqrt(sq.to_float_array()))


def square_fn_dyadic_sq(sys: EuclidSystem, f: GridSignal, system: int = 1,
                        window: ScaleRange | None = None) -> GridSignal:
    """Coefficient-form square function: sum over indices of |c|^2 |h|^2.

    Computed per index from scratch (inner product against the stored
    pattern), so it is independent of the conjugation shortcut and of the
    fast analyze path.
    """
    if f.mode != EXACT:
        raise GridMismatch("coefficient-form square function needs exact input")
    acc_a = np.zeros(sys.grid.ncells, dtype=object)
    acc_b = np.zeros(sys.grid.ncells, dtype=object)
    ea = [None]
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

    for idx in enumerate_indices(sys, system, window):
        c = coefficient(sys, f, idx)
        if c.is_zero:
            continue
        pat, vexp = haar_pattern(sys, idx)
        mask = pat != 0
        # |c|^2 / |support|; squaring folds the sqrt(2) of the norm back in
        w = c * c * DR.pow2(-vexp)
        add(acc_a, ea, w.mantissa, w.exponent, mask)
        add(acc_b, eb, w.root_mantissa, w.root_exponent, mask)
    return GridSignal(sys.grid, EXACT, acc_a, ea[0] or 0, acc_b, eb[0] or 0)


def square_fn_dyadic(sys: EuclidSystem, f: GridSignal, system: int = 1,
                     window: ScaleRange | None = None) -> GridSignal:
    sq = square_fn_dyadic_sq(sys, f, system, window)
    return GridSignal(sys.grid, FLOAT, np.sqrt(sq.to_float_array()))


def p2_identity(sys: EuclidSystem, f: GridSignal, system: int = 1) -> tuple[DR, DR]:
    """Exact two-sided p=2 data: (integral of S^2, squared L2 norm of f-mean)."""
    sq = square_fn_mart_sq(sys, f, system)
    return sq.total(), l2_norm_sq(f.sub_mean())


# ---- L^p ratio experiments ----

@dataclass
class LpReport:
    ps: tuple[float, ...]
    trials: int
    seed: int
    law: str
    rows: list[tuple[int, float, int, float]] = field(default_factory=list)
    brackets: dict[tuple[int, float], tuple[float, float]] = field(default_factory=dict)
    transfer_max_dev: float = 0.0

    def csv_lines(self) -> list[str]:
        out = ["system,p,trial,ratio"]
        for system, p, trial, ratio in self.rows:
            out.append(f"{system},{p:g},{trial},{ratio!r}")
        return out


def lp_ratio_report(sys: EuclidSystem, ps=(1.5, 2.0, 3.0, 4.0), trials: int = 100,
                    seed: int = 0, law: str = "uniform",
                    systems=SYSTEMS, transfer_tol: float = 1e-10) -> LpReport:
    """Ratios ||S f_i||_p / ||f_i - mean||_p over random trials.

    Each trial transports one base sample by U_i, so the three systems see
    identically distributed inputs; the per-trial ratios must then agree
    across systems (checked against transfer_tol).  Ratios are collected per
    (system, p) into min/max brackets.
    """
    rep = LpReport(tuple(ps), trials, seed, law)
    for t in range(trials):
        base = random_signal(sys.grid, seed=seed + t, law=law, mode=FLOAT)
        if not np.any(base.to_float_array() - float(base.mean())):
            base = random_signal(sys.grid, seed=seed + trials + t, law=law, mode=FLOAT)
        for p in ps:
            ratios = []
            for i in systems:
                fi = sys.transport(base, i)
                s = square_fn_mart(sys, fi, i)
                num = lp_norm(s, p)
                den = lp_norm(fi.sub_mean(), p)
                if den == 0:
                    raise ScaleError("degenerate trial: constant input")
                ratio = num / den
                if ratio <= 0:
                    raise ScaleError("square function vanished on a nonconstant input")
                ratios.append(ratio)
                rep.rows.append((i, p, t, ratio))
                key = (i, p)
                lo, hi = rep.brackets.get(key, (ratio, ratio))
                rep.brackets[key] = (min(lo, ratio), max(hi, ratio))
            dev = max(ratios) - min(ratios)
            rep.transfer_max_dev = max(rep.transfer_max_dev, dev)
            if dev > transfer_tol:
                raise ScaleError(
                    f"transported ratio mismatch {dev} at p={p}, trial {t}")
    return rep
