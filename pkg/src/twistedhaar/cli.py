"""Command-line entry point: one binary, one subcommand per module.

Configuration comes from an optional key=value text file overridden by
flags; all randomness flows through a single named seed, so identical
configurations produce byte-identical reports.  Exit codes: 0 every check
passed, 1 a verification check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys as _sys

import numpy as np

from . import figures as figmod
from .dyadic import DyadicRational as DR
from .errors import TwistedHaarError
from .grid import (
    EXACT,
    FLOAT,
    l2_norm_sq,
    make_grid,
    parse_axes,
    random_signal,
    read_tgs1,
    write_tgs1,
)
from .haar import (
    EuclidSystem,
    ScaleRange,
    analyze,
    enumerate_indices,
    frame_apply,
    haar_pattern,
    read_thc1,
    synthesize,
    write_thc1,
)
from .martingale import (
    cond_expect,
    cond_expect_direct,
    lp_ratio_report,
    mart_diff,
    p2_identity,
    square_fn_mart_sq,
)
from .nilhaar import (
    _PAIRING,
    AnalyticShard,
    NilSystem,
    analytic_family,
    comparability_check,
    enumerate_nil_indices,
    nil_haar_pattern,
    nilpotent_analyze,
    nilpotent_cond_expect,
    nilpotent_cond_expect_direct,
    nilpotent_frame,
    nilpotent_mart_diff,
    nilpotent_square_fn_dyadic_sq,
    nilpotent_square_fn_sq,
    nilpotent_synthesize,
    shard_cells,
    shard_parent,
    write_nil_thc1,
)
from .shards import (
    FactorSpec,
    Profile,
    case_parameters,
    raw_shard,
    raw_shard_intermediate,
    rect_area,
    shard_lattice,
    tube_sigma,
    verify_partition,
    write_fbr1,
)
from .shears import PullbackOperator, make_shear, verify_unimodular

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# default scale triple per regime (strict orderings; ties are inadmissible)
_CASE_J = {1: (1, 0, -1), 2: (2, 0, 1), 3: (0, 0, 1)}


# ---- configuration ----

def load_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


class RunConfig:
    """Flag values layered over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace, file_values: dict[str, str]):
        self.args = args
        self.file_values = file_values

    def get(self, name: str, default=None, cast=str):
        attr = "in_" if name == "in" else name.replace("-", "_")
        flag = getattr(self.args, attr, None)
        if flag is not None:
            return flag
        if name in self.file_values:
            return cast(self.file_values[name])
        return default

    @property
    def seed(self) -> int:
        return self.get("seed", 0, int)

    @property
    def mode(self) -> str:
        mode = self.get("mode", EXACT)
        if mode not in (EXACT, FLOAT):
            raise ValueError(f"mode must be {EXACT} or {FLOAT}")
        return mode

    @property
    def out_dir(self) -> str:
        out = self.get("out", ".")
        os.makedirs(out, exist_ok=True)
        return out

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _triple(text: str) -> tuple[int, int, int]:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated integers")
    return parts


def _pair(text: str) -> tuple[int, int]:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated integers")
    return parts


def _system_sel(text: str):
    if text == "all":
        return text
    if text in ("1", "2", "3"):
        return int(text)
    raise argparse.ArgumentTypeError("system must be 1, 2, 3 or all")


def _profile(kind: str, seed: int, mu: int) -> Profile:
    if kind == "zero":
        return Profile.zero()
    name, _, tail = kind.partition(":")
    if name != "staircase":
        raise ValueError(f"profile must be zero or staircase[:SEED], got {kind!r}")
    base = int(tail) if tail else seed
    return Profile.staircase(1, 1, base + mu)


def _specs(kind: str, kappa: int, seed: int):
    return (FactorSpec(1, _profile(kind, seed, 1), kappa),
            FactorSpec(2, _profile(kind, seed, 2), kappa),
            FactorSpec(3, Profile.zero(), kappa))


def _write_csv(path: str, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _resolve_out_file(cfg: RunConfig, default_name: str, exts: tuple[str, ...]) -> str:
    """The --out value names the file itself when it carries a known
    extension; otherwise it is the report directory."""
    out = cfg.get("out", ".")
    if out.endswith(exts):
        d = os.path.dirname(out) or "."
        os.makedirs(d, exist_ok=True)
        return out
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, default_name)


# ---- subcommands ----

def _require_exact(cfg: RunConfig, command: str) -> None:
    if cfg.mode != EXACT:
        raise ValueError(f"{command} reports are exact by construction; "
                         f"run with --mode exact")


def _euclid_input(cfg: RunConfig) -> tuple[EuclidSystem, "GridSignal"]:
    """System and exact input signal: --in reads a TGS1 file (the grid fixes
    m, extent, res), otherwise a seeded signal on the flag-specified grid."""
    path = cfg.get("in", None)
    if path is not None:
        f = read_tgs1(path)
        if f.mode != EXACT:
            raise ValueError("exact reports need an exact-mode input signal")
        axes = f.grid.axes
        if len(axes) % 2 or len({(a.extent_exp, a.res_exp) for a in axes}) != 1:
            raise ValueError("input grid is not a uniform 2m-axis torus")
        sys_ = EuclidSystem(m=len(axes) // 2, extent_exp=axes[0].extent_exp,
                            res_exp=axes[0].res_exp)
        return sys_, f
    sys_ = EuclidSystem(m=cfg.get("m", 1, int),
                        extent_exp=cfg.get("extent", 0, int),
                        res_exp=cfg.get("res", 4, int))
    f = random_signal(sys_.grid, seed=cfg.seed, law=cfg.get("law", "uniform"),
                      mode=EXACT)
    return sys_, f


def cmd_haar(cfg: RunConfig) -> int:
    _require_exact(cfg, "haar")
    op = cfg.args.haar_op

    if op == "synthesize":
        path = cfg.get("in", None)
        if path is None:
            raise ValueError("haar synthesize needs --in coefficients.thc1")
        header, coeffs = read_thc1(path)
        extent, res = (int(v) for v in header["axes"].split(","))
        sys_ = EuclidSystem(m=int(header["m"]), extent_exp=extent, res_exp=res)
        g = synthesize(sys_, coeffs)
        out = cfg.path("haar_synth.tgs1")
        write_tgs1(g, out)
        print(f"haar synthesize: system={coeffs.system} "
              f"coefficients={len(coeffs.data)} -> {out}")
        return EXIT_OK

    sys_, f = _euclid_input(cfg)
    sel = cfg.get("system", "all", _system_sel)
    systems = (1, 2, 3) if sel == "all" else (sel,)

    if op == "analyze":
        write_tgs1(f, cfg.path("haar_input.tgs1"))
        for i in systems:
            coeffs = analyze(sys_, f, i)
            write_thc1(sys_, coeffs, cfg.path(f"haar_system{i}.thc1"))
        print(f"haar analyze: m={sys_.m} grid={sys_.grid.shape} "
              f"systems={','.join(str(i) for i in systems)}")
        return EXIT_OK

    if op == "frame":
        rep = frame_apply(sys_, f)
        rows = [f"system{i}_energy,{rep.system_energies[i].to_float()!r}"
                for i in (1, 2, 3)]
        rows.append(f"ratio,{rep.ratio}")
        rows.append(f"tight,{rep.tight}")
        _write_csv(cfg.path("haar_frame.csv"), "field,value", rows)
        if sel == "all":
            print(f"haar frame: ratio={rep.ratio} tight={rep.tight}")
            return EXIT_OK if rep.tight else EXIT_FAIL
        # one complete system alone is an orthonormal basis: Parseval ratio 1
        part = rep.system_energies[sel].as_fraction() / rep.denominator.as_fraction()
        print(f"haar frame: system={sel} parseval_ratio={part}")
        return EXIT_OK if part == 1 else EXIT_FAIL

    raise ValueError(f"unknown haar operation {op!r}")


def cmd_mart(cfg: RunConfig) -> int:
    op = cfg.args.mart_op

    if op == "lp-report":
        trials = cfg.get("trials", 100, int)
        law = cfg.get("law", "uniform")
        ps = tuple(float(p) for p in str(cfg.get("p", "1.5,2,3,4")).split(","))
        systems = tuple(int(s) for s in str(cfg.get("systems", "1,2,3")).split(","))
        sys_ = EuclidSystem(m=cfg.get("m", 1, int),
                            extent_exp=cfg.get("extent", 0, int),
                            res_exp=cfg.get("res", 3, int))
        rep = lp_ratio_report(sys_, ps=ps, trials=trials, seed=cfg.seed,
                              law=law, systems=systems)
        out = _resolve_out_file(cfg, "mart_lp.csv", (".csv",))
        _write_csv(out, rep.csv_lines()[0], rep.csv_lines()[1:])
        brows = [f"{i},{p:g},{lo!r},{hi!r}"
                 for (i, p), (lo, hi) in sorted(rep.brackets.items())]
        _write_csv(os.path.join(os.path.dirname(out) or ".", "mart_brackets.csv"),
                   "system,p,min_ratio,max_ratio", brows)
        print(f"mart lp-report: trials={trials} systems={systems} "
              f"transfer_dev={rep.transfer_max_dev:.3e} -> {out}")
        return EXIT_OK

    _require_exact(cfg, "mart " + op)
    sys_, f = _euclid_input(cfg)
    system = cfg.get("system", 1, int)
    ks = cfg.get("k", (sys_.k_min, sys_.k_min), _pair)

    if op == "expect":
        g = cond_expect(sys_, f, ks, system)
        ok = g.equals(cond_expect_direct(sys_, f, ks, system))
        write_tgs1(g, cfg.path("mart_expect.tgs1"))
        print(f"mart expect: system={system} k={ks} "
              f"atom_oracle={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    if op == "diff":
        d = mart_diff(sys_, f, ks, system)
        co = analyze(sys_, f, system, ScaleRange(ks[0], ks[0], ks[1], ks[1]))
        ok = d.equals(synthesize(sys_, co))
        write_tgs1(d, cfg.path("mart_diff.tgs1"))
        print(f"mart diff: system={system} k={ks} "
              f"projection={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    if op == "square":
        sq = square_fn_mart_sq(sys_, f, system)
        write_tgs1(sq, cfg.path("mart_square_sq.tgs1"))
        lhs, rhs = p2_identity(sys_, f, system)
        ok = lhs == rhs
        print(f"mart square: system={system} p2={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    raise ValueError(f"unknown mart operation {op!r}")


def cmd_shear(cfg: RunConfig) -> int:
    if cfg.args.shear_op != "verify":
        raise ValueError(f"unknown shear operation {cfg.args.shear_op!r}")
    kind = cfg.get("kind", None)
    kinds = (kind,) if kind else ("T2", "T3", "Theta")
    gridspec = cfg.get("grid", None)
    rows = []
    ok = True
    for name in kinds:
        if gridspec is not None:
            grid = make_grid(parse_axes(gridspec))
        elif name == "Theta":
            grid = NilSystem().grid
        else:
            grid = EuclidSystem(m=1, extent_exp=0, res_exp=3).grid
        shear = make_shear(name, grid)
        rep = verify_unimodular(shear)
        f = random_signal(grid, seed=cfg.seed, law="uniform", mode=cfg.mode)
        op = PullbackOperator(shear)
        round_trip = op.adjoint()(op(f)).equals(f)
        if cfg.mode == EXACT:
            iso = l2_norm_sq(op(f)) == l2_norm_sq(f)
        else:
            # float sums over permuted cells can differ in the last ulp
            iso = math.isclose(l2_norm_sq(op(f)), l2_norm_sq(f), rel_tol=1e-12)
        good = rep.determinant == 1 and rep.bijective and round_trip and iso
        ok = ok and good
        rows.append(f"{name},{rep.determinant},{rep.bijective},{round_trip},{iso}")
        print(f"shear verify: kind={name} det={rep.determinant} "
              f"bijective={rep.bijective} tested_shape={rep.tested_shape}")
    _write_csv(cfg.path("shear_report.csv"),
               "kind,determinant,bijective,round_trip,isometry", rows)
    return EXIT_OK if ok else EXIT_FAIL


def _window_rect(text: str):
    vals = [int(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("window needs u_lo,u_hi,v_lo,v_hi")
    return tuple(DR.from_int(v) for v in vals)


def cmd_shards(cfg: RunConfig) -> int:
    op = cfg.args.shards_op
    case = cfg.get("case", 1, int)
    j = cfg.get("j", None, _triple) or _CASE_J[case]
    kappa = cfg.get("kappa", 0, int)
    prof = cfg.get("profile", "zero")
    specs = _specs(prof, kappa, cfg.seed)

    if op == "build":
        region = raw_shard(case, specs, j)
        out = _resolve_out_file(cfg, f"shard_case{case}.fbr1", (".fbr", ".fbr1"))
        write_fbr1(region, out, label=f"case{case}")
        key = min(region.fibers)
        area = DR.zero()
        for r in region.fibers[key]:
            area = area + rect_area(r)
        print(f"shards build: case={case} j={j} fibers={len(region.fibers)} "
              f"fiber_area={area.to_float()!r} -> {out}")
        return EXIT_OK

    if op == "verify-partition":
        window = cfg.get("window", None, _window_rect)
        rep = verify_partition(case, specs, j, window=window)
        rows = [f"case,{case}", f"j,{j[0]};{j[1]};{j[2]}", f"kappa,{kappa}",
                f"profile,{prof}", f"fibers,{rep.cells_checked}",
                f"translates,{rep.translates_used}",
                f"min_mult,{rep.min_mult}", f"max_mult,{rep.max_mult}"]
        _write_csv(cfg.path(f"partition_case{case}.csv"), "field,value", rows)
        print(f"shards verify-partition: case={case} j={j} "
              f"mult={rep.min_mult}..{rep.max_mult} "
              f"{'pass' if rep.ok else 'FAIL'}")
        return EXIT_OK if rep.ok else EXIT_FAIL

    if op == "tube-sigma":
        sigma_max = cfg.get("sigma-max", 10, int)
        ts = tube_sigma(case, specs, j, sigma_max=sigma_max)
        rows = [f"case,{case}", f"j,{j[0]};{j[1]};{j[2]}", f"kappa,{kappa}",
                f"profile,{prof}", f"sigma,{ts.sigma}",
                f"inner_sigma,{ts.inner_sigma}", f"outer_sigma,{ts.outer_sigma}"]
        _write_csv(cfg.path(f"tube_case{case}.csv"), "field,value", rows)
        print(f"shards tube-sigma: case={case} j={j} sigma={ts.sigma}")
        return EXIT_OK

    raise ValueError(f"unknown shards operation {op!r}")


def _nil_system(cfg: RunConfig) -> NilSystem:
    dims = cfg.get("dims", (1, 1, 1), _triple)
    kappa = cfg.get("kappa", 0, int)
    window = cfg.get("window", None)
    if window is None:
        cell, top = 0, 2
    else:
        cell, top = (int(v) for v in str(window).split(","))
    return NilSystem(dims=dims, kappa=kappa, cell_scale=cell, top_scale=top)


def cmd_nil(cfg: RunConfig) -> int:
    _require_exact(cfg, "nil")
    op = cfg.args.nil_op
    ns = _nil_system(cfg)
    type_k = cfg.get("type", 3, int)
    j = cfg.get("j", (1, 1, 1), _triple)

    if op == "compare":
        case = cfg.get("case", 1, int)
        j = cfg.get("j", None, _triple) or _CASE_J[case]
        kappa = cfg.get("kappa", 0, int)
        specs = _specs("zero", kappa, cfg.seed)
        cell, top = min(j), max(max(j), min(j) + 1)
        nsc = NilSystem(dims=(1, 1, 1), kappa=kappa, cell_scale=cell, top_scale=top)
        zero_pos = []
        base = 2 if case == 3 else case
        for mu in (1, 2, 3):
            paired = _PAIRING[base].get(mu) is not None
            zero_pos.append((0,) * (1 + (1 if paired else 0)))
        shard = AnalyticShard(case, j, tuple(zero_pos))
        raw = raw_shard(case, specs, j)
        c_in, c_out = comparability_check(nsc, raw, shard)
        ts = tube_sigma(case, specs, j)
        rows = [f"{case},{j[0]};{j[1]};{j[2]},{c_in},{c_out},{ts.sigma}"]
        _write_csv(cfg.path("nil_compare.csv"), "case,j,c_in,c_out,sigma", rows)
        print(f"nil compare: case={case} j={j} c_in={c_in} c_out={c_out} "
              f"sigma={ts.sigma}")
        return EXIT_OK

    f = random_signal(ns.grid, seed=cfg.seed, law=cfg.get("law", "uniform"),
                      mode=EXACT)
    if op == "haar":
        coeffs = nilpotent_analyze(ns, f, type_k)
        write_nil_thc1(ns, coeffs, cfg.path(f"nil_type{type_k}.thc1"))
        rec = nilpotent_synthesize(ns, coeffs)
        ok = rec.equals(f.sub_mean())
        print(f"nil haar: type={type_k} coefficients={len(coeffs.data)} "
              f"reconstruction={'exact' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    if op == "expect":
        g = nilpotent_cond_expect(ns, f, j, type_k)
        ok = g.equals(nilpotent_cond_expect_direct(ns, f, j, type_k))
        write_tgs1(g, cfg.path("nil_expect.tgs1"))
        print(f"nil expect: type={type_k} j={j} oracle={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    if op == "diff":
        d = nilpotent_mart_diff(ns, f, j, type_k)
        s = nilpotent_synthesize(ns, nilpotent_analyze(ns, f, type_k, triples=[j]))
        ok = d.equals(s)
        write_tgs1(d, cfg.path("nil_diff.tgs1"))
        print(f"nil diff: type={type_k} j={j} projection={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    if op == "frame":
        rep = nilpotent_frame(ns, f)
        rows = [f"type{k}_energy,{rep.type_energies[k].to_float()!r}"
                for k in (1, 2, 3)]
        rows.append(f"ratio,{rep.ratio}")
        rows.append(f"tight,{rep.tight}")
        _write_csv(cfg.path("nil_frame.csv"), "field,value", rows)
        print(f"nil frame: ratio={rep.ratio} tight={rep.tight}")
        return EXIT_OK if rep.tight else EXIT_FAIL
    if op == "square":
        sq = nilpotent_square_fn_sq(ns, f, type_k)
        write_tgs1(sq, cfg.path("nil_square_sq.tgs1"))
        lhs = sq.total()
        rhs = l2_norm_sq(f.sub_mean())
        ok = lhs == rhs
        print(f"nil square: type={type_k} p2={'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_FAIL
    raise ValueError(f"unknown nil operation {op!r}")


def cmd_figures(cfg: RunConfig) -> int:
    paths = figmod.make_all(cfg.out_dir, seed=cfg.seed,
                            kappa=cfg.get("kappa", 0, int),
                            render=not cfg.get("no-render", False, bool))
    print(f"figures: wrote {len(paths)} files to {cfg.out_dir}")
    return EXIT_OK


# ---- the verification suite ----

def _euclid_orthonormality(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=4)
    cve = sys_.grid.cell_volume_exp
    pairs = 0
    for i in (1, 2, 3):
        idxs = enumerate_indices(sys_, i)
        pats = np.zeros((len(idxs), sys_.grid.ncells), dtype=np.int64)
        vexps = []
        for r, ix in enumerate(idxs):
            pat, v = haar_pattern(sys_, ix)
            pats[r] = pat
            vexps.append(v)
        gram = pats @ pats.T
        off = gram - np.diag(np.diag(gram))
        if np.any(off):
            return False, f"system {i} has nonorthogonal pairs"
        for r in range(len(idxs)):
            if int(gram[r, r]) != 1 << (vexps[r] - cve):
                return False, f"system {i} element {r} is not unit norm"
        pairs += len(idxs) * (len(idxs) - 1) // 2
    return True, f"systems=3;elements=255;pairs={pairs}"


def _euclid_frame(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    for t in range(5):
        f = random_signal(sys_.grid, seed=seed + t, law="uniform", mode=EXACT)
        rep = frame_apply(sys_, f)
        if not rep.tight or str(rep.ratio) != "3":
            return False, f"trial {t}: ratio={rep.ratio}"
    return True, "ratio=3;trials=5"


def _euclid_delta(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    f = random_signal(sys_.grid, seed=seed, law="uniform", mode=EXACT)
    for i in (1, 2, 3):
        for k1 in range(sys_.k_min, sys_.k_max + 1):
            for k2 in range(sys_.k_min, sys_.k_max + 1):
                d = mart_diff(sys_, f, (k1, k2), i)
                co = analyze(sys_, f, i, ScaleRange(k1, k1, k2, k2))
                if not d.equals(synthesize(sys_, co)):
                    return False, f"system {i} scales ({k1},{k2})"
    return True, "all scale pairs;systems=3"


def _euclid_conjugation(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    f = random_signal(sys_.grid, seed=seed + 1, law="uniform", mode=EXACT)
    for i in (2, 3):
        for ks in ((0, 1), (2, 0), (1, 1)):
            if not cond_expect(sys_, f, ks, i).equals(
                    cond_expect_direct(sys_, f, ks, i)):
                return False, f"E system {i} scales {ks}"
    return True, "systems 2,3 vs atom oracle"


def _euclid_intertwining(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    f = random_signal(sys_.grid, seed=seed + 2, law="uniform", mode=EXACT)
    for i in (2, 3):
        si = square_fn_mart_sq(sys_, f, i)
        s1 = square_fn_mart_sq(sys_, sys_.transport_adj(f, i), 1)
        if not si.equals(sys_.transport(s1, i)):
            return False, f"system {i} squared transfer"
    return True, "cellwise exact, systems 2,3"


def _euclid_p2(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    f = random_signal(sys_.grid, seed=seed + 3, law="uniform", mode=EXACT)
    for i in (1, 2, 3):
        lhs, rhs = p2_identity(sys_, f, i)
        if lhs != rhs:
            return False, f"system {i}"
    return True, "exact, systems=3"


def _mart_lp(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    rep = lp_ratio_report(sys_, ps=(1.5, 3.0), trials=10, seed=seed)
    return True, f"trials=10;transfer_dev={rep.transfer_max_dev!r}"


def _shear_unimodular(seed: int):
    sys_ = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    ns = NilSystem()
    for name, shear in (("T2", make_shear("T2", sys_.grid)),
                        ("T3", make_shear("T3", sys_.grid)),
                        ("Theta", make_shear("Theta", ns.grid))):
        rep = verify_unimodular(shear)
        if rep.determinant != 1 or not rep.bijective:
            return False, name
    return True, "T2,T3,Theta det=1 bijective"


def _fiber_sizes(seed: int):
    checked = 0
    for case, j in _CASE_J.items():
        for prof in ("zero", "staircase"):
            specs = _specs(prof, 0, seed)
            par = case_parameters(case, j, 0)
            region = raw_shard(case, specs, j)
            for rects in region.fibers.values():
                area = DR.zero()
                for r in rects:
                    area = area + rect_area(r)
                if case == 1:
                    want = (par["L1"] * 2) * (par["L2"] * 2)
                elif case == 2:
                    want = (par["L1"] * 2) * (par["L2"] * (2 * par["N"]))
                else:
                    want = (par["L"] * 6) * (par["L"] * (2 * par["N"]))
                if area != want:
                    return False, f"case {case} profile {prof}"
                checked += 1
            if case == 3:
                inter = raw_shard_intermediate(specs, j)
                for rects in inter.fibers.values():
                    area = DR.zero()
                    for r in rects:
                        area = area + rect_area(r)
                    if area != (par["L"] * 2) * (par["L"] * 2):
                        return False, "case 3 intermediate"
    return True, f"fibers={checked};profiles=2"


def _partition_case(case: int, seed: int, broken: bool = False):
    j = _CASE_J[case]
    specs = _specs("zero", 0, seed)
    override = None
    if broken:
        lat = shard_lattice(case, j, specs)
        (a, b), (c, d) = lat.central_gens
        override = ((a + a + a, b), (c, d))   # triple the first step: gaps
    rep = verify_partition(case, specs, j, lattice_override=override)
    if not rep.ok:
        return False, f"multiplicity {rep.min_mult}..{rep.max_mult}"
    return True, f"mult=1;cells={rep.cells_checked}"


def _partition_analytic(type_k: int, seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=2)
    for j in ((1, 1, 1), (1, 2, 1)):
        cover = np.zeros(ns.grid.ncells, dtype=np.int64)
        for sh in analytic_family(ns, type_k, j):
            cover[shard_cells(ns, sh)] += 1
        if cover.min() != 1 or cover.max() != 1:
            return False, f"j={j} mult {cover.min()}..{cover.max()}"
    return True, "mult=1;triples=2"


def _nesting(seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=3)
    for type_k in (1, 2, 3):
        for step in (1, 2):
            j = (step,) * 3
            jp = (step + 1,) * 3
            cover = np.zeros(ns.grid.ncells, dtype=np.int64)
            starts = {}
            for sh in analytic_family(ns, type_k, jp):
                cells = shard_cells(ns, sh)
                cover[cells] += 1
                starts[sh] = cells
            if cover.min() != 1 or cover.max() != 1:
                return False, f"type {type_k} parents at {jp} do not partition"
            # parents partition the grid, so containment in the computed
            # parent certifies uniqueness
            for sh in analytic_family(ns, type_k, j):
                cells = shard_cells(ns, sh)
                pc = starts[shard_parent(ns, sh)]
                if not np.all(np.isin(cells, pc, assume_unique=True)):
                    return False, f"type {type_k} shard at {j} escapes its parent"
    return True, "types=3;ladder=3 scales"


def _tube(seed: int):
    for case, j in _CASE_J.items():
        specs = _specs("zero", 0, seed)
        s0 = tube_sigma(case, specs, j).sigma
        j1 = tuple(v + 1 for v in j)
        s1 = tube_sigma(case, specs, j1).sigma
        lat = shard_lattice(case, j, specs)
        shard = raw_shard(case, specs, j).translate(central=lat.central_gens[0])
        s2 = tube_sigma(case, specs, j, shard=shard,
                        lattice_point=lat.central_gens[0]).sigma
        if not (s0 == s1 == s2):
            return False, f"case {case}: {s0},{s1},{s2}"
    return True, "sigma stable under scale shift and translation"


def _comparability(seed: int):
    want = {1: (1, 2), 2: (1, 2), 3: (1, 8)}
    for case, j in _CASE_J.items():
        specs = _specs("zero", 0, seed)
        cell, top = min(j), max(max(j), min(j) + 1)
        ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=cell, top_scale=top)
        base = 2 if case == 3 else case
        pos = tuple((0,) * (1 + (1 if _PAIRING[base].get(mu) is not None else 0))
                    for mu in (1, 2, 3))
        got = comparability_check(ns, raw_shard(case, specs, j),
                                  AnalyticShard(case, j, pos))
        if got != want[case]:
            return False, f"case {case}: {got} != {want[case]}"
    return True, "constants (1,2),(1,2),(1,8)"


def _nil_orthonormality(seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=1)
    cve = ns.grid.cell_volume_exp
    for k in (1, 2, 3):
        idxs = enumerate_nil_indices(ns, k)
        if len(idxs) != ns.grid.ncells - 1:
            return False, f"type {k} has {len(idxs)} elements"
        pats = np.zeros((len(idxs), ns.grid.ncells), dtype=np.int64)
        vexps = []
        for r, ix in enumerate(idxs):
            pat, v = nil_haar_pattern(ns, ix)
            pats[r] = pat
            vexps.append(v)
        gram = pats @ pats.T
        if np.any(gram - np.diag(np.diag(gram))):
            return False, f"type {k} has nonorthogonal pairs"
        for r in range(len(idxs)):
            if int(gram[r, r]) != 1 << (vexps[r] - cve):
                return False, f"type {k} element {r} not unit norm"
    return True, "types=3;elements=127 each"


def _nil_frame(seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=2)
    for t in range(2):
        f = random_signal(ns.grid, seed=seed + t, law="uniform", mode=EXACT)
        rep = nilpotent_frame(ns, f)
        if not rep.tight or str(rep.ratio) != "3":
            return False, f"trial {t}: ratio={rep.ratio}"
    return True, "ratio=3;cells=16384;trials=2"


def _nil_conjugation(seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=2)
    f = random_signal(ns.grid, seed=seed + 5, law="uniform", mode=EXACT)
    for j in ((1, 1, 1), (2, 1, 2)):
        if not nilpotent_cond_expect(ns, f, j, 3).equals(
                nilpotent_cond_expect_direct(ns, f, j, 3)):
            return False, f"E at {j}"
    d = nilpotent_mart_diff(ns, f, (1, 2, 1), 3)
    s = nilpotent_synthesize(ns, nilpotent_analyze(ns, f, 3, triples=[(1, 2, 1)]))
    if not d.equals(s):
        return False, "Delta vs expansion at (1,2,1)"
    return True, "type 3 vs atom oracle and expansion"


def _nil_square(seed: int):
    ns = NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=1)
    f = random_signal(ns.grid, seed=seed + 6, law="uniform", mode=EXACT)
    rhs = l2_norm_sq(f.sub_mean())
    for k in (1, 2, 3):
        sq = nilpotent_square_fn_sq(ns, f, k)
        if sq.total() != rhs:
            return False, f"type {k} integral"
        if nilpotent_square_fn_dyadic_sq(ns, f, k).total() != rhs:
            return False, f"type {k} coefficient route"
    sq3 = nilpotent_square_fn_sq(ns, f, 3)
    sq2 = nilpotent_square_fn_sq(ns, ns.transport_adj(f, 3), 2)
    if not sq3.equals(ns.transport(sq2, 3)):
        return False, "type 3 transfer"
    return True, "p2 exact;transfer exact"


def cmd_verify_all(cfg: RunConfig) -> int:
    seed = cfg.seed
    broken = bool(getattr(cfg.args, "inject_broken_lattice", False))
    checks = [
        ("euclid.orthonormality", lambda: _euclid_orthonormality(seed)),
        ("euclid.frame", lambda: _euclid_frame(seed)),
        ("euclid.delta_projection", lambda: _euclid_delta(seed)),
        ("euclid.conjugation", lambda: _euclid_conjugation(seed)),
        ("euclid.intertwining", lambda: _euclid_intertwining(seed)),
        ("euclid.p2", lambda: _euclid_p2(seed)),
        ("mart.lp_brackets", lambda: _mart_lp(seed)),
        ("shear.unimodular", lambda: _shear_unimodular(seed)),
        ("tile.fiber_sizes", lambda: _fiber_sizes(seed)),
        ("partition.case1", lambda: _partition_case(1, seed, broken)),
        ("partition.case2", lambda: _partition_case(2, seed)),
        ("partition.case3", lambda: _partition_case(3, seed)),
        ("partition.analytic1", lambda: _partition_analytic(1, seed)),
        ("partition.analytic2", lambda: _partition_analytic(2, seed)),
        ("partition.analytic3", lambda: _partition_analytic(3, seed)),
        ("nesting.analytic", lambda: _nesting(seed)),
        ("tube.sigma", lambda: _tube(seed)),
        ("comparability.constants", lambda: _comparability(seed)),
        ("nil.orthonormality", lambda: _nil_orthonormality(seed)),
        ("nil.frame", lambda: _nil_frame(seed)),
        ("nil.conjugation", lambda: _nil_conjugation(seed)),
        ("nil.square", lambda: _nil_square(seed)),
    ]
    rows = []
    failures = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except TwistedHaarError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        status = "pass" if ok else "fail"
        rows.append(f"{name},{status},{detail}")
        if not ok:
            failures.append(name)
        print(f"{'PASS' if ok else 'FAIL'}  {name:26s} {detail}")
    _write_csv(cfg.path("verify_all.csv"), "check,status,detail", rows)
    if failures:
        print(f"FAILED ({len(failures)} of {len(checks)}): " + ", ".join(failures))
        return EXIT_FAIL
    print(f"ALL CHECKS PASSED ({len(checks)})")
    return EXIT_OK


# ---- argument parsing ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twistedhaar",
        description="Exact twisted dyadic Haar systems, shard geometry and "
                    "their verification suites.")
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--mode", choices=(EXACT, FLOAT), help="numeric mode")
    parser.add_argument("--out", help="output directory (default .)")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid_flags(q, with_in=True):
        q.add_argument("--m", type=int)
        q.add_argument("--extent", type=int)
        q.add_argument("--res", type=int)
        q.add_argument("--law")
        if with_in:
            q.add_argument("--in", dest="in_", metavar="PATH",
                           help="TGS1 input signal (grid overrides --m/--extent/--res)")

    p = sub.add_parser("haar", help="Euclidean Haar coefficients and frame")
    hsub = p.add_subparsers(dest="haar_op", required=True)
    q = hsub.add_parser("analyze", help="coefficient files per system")
    grid_flags(q)
    q.add_argument("--system", type=_system_sel)
    q = hsub.add_parser("synthesize", help="signal from a THC1 coefficient file")
    q.add_argument("--in", dest="in_", metavar="PATH", help="THC1 coefficients")
    q = hsub.add_parser("frame", help="triple-system energy and reconstruction")
    grid_flags(q)
    q.add_argument("--system", type=_system_sel)

    p = sub.add_parser("mart", help="martingale identities and L^p ratios")
    msub = p.add_subparsers(dest="mart_op", required=True)
    for opname, hint in (("expect", "conditional expectation at a scale pair"),
                         ("diff", "martingale difference at a scale pair"),
                         ("square", "squared square function")):
        q = msub.add_parser(opname, help=hint)
        grid_flags(q)
        q.add_argument("--system", type=int, choices=(1, 2, 3))
        q.add_argument("--k", type=_pair, help="scale pair k1,k2")
    q = msub.add_parser("lp-report", help="L^p ratio sweep over seeded trials")
    grid_flags(q, with_in=False)
    q.add_argument("--systems", help="comma list, default 1,2,3")
    q.add_argument("--p", help="comma list of exponents, default 1.5,2,3,4")
    q.add_argument("--trials", type=int)
    q.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    q.add_argument("--out", default=argparse.SUPPRESS,
                   help="report CSV path, or a directory")

    p = sub.add_parser("shear", help="unimodularity and pullback checks")
    ssub = p.add_subparsers(dest="shear_op", required=True)
    q = ssub.add_parser("verify", help="determinant and bijectivity certificate")
    q.add_argument("--kind", choices=("T2", "T3", "Theta"))
    q.add_argument("--grid", help="axis spec L,K;L,K;... (defaults per kind)")

    p = sub.add_parser("shards", help="raw shard geometry reports")
    dsub = p.add_subparsers(dest="shards_op", required=True)

    def shard_flags(q):
        q.add_argument("--case", type=int, choices=(1, 2, 3))
        q.add_argument("--j", type=_triple)
        q.add_argument("--kappa", type=int)
        q.add_argument("--profile", help="zero or staircase[:SEED]")

    q = dsub.add_parser("build", help="write the region as an FBR1 file")
    shard_flags(q)
    q.add_argument("--out", default=argparse.SUPPRESS,
                   help="region file path (.fbr/.fbr1), or a directory")
    q = dsub.add_parser("verify-partition", help="lattice translate overlay")
    shard_flags(q)
    q.add_argument("--window", type=_window_rect,
                   help="central window u_lo,u_hi,v_lo,v_hi (integers)")
    q = dsub.add_parser("tube-sigma", help="minimal two-sided tube exponent")
    shard_flags(q)
    q.add_argument("--sigma-max", type=int)

    p = sub.add_parser("nil", help="tri-parameter systems on the quotient model")
    nsub = p.add_subparsers(dest="nil_op", required=True)
    for opname in ("haar", "expect", "diff", "frame", "square"):
        q = nsub.add_parser(opname)
        q.add_argument("--type", type=int, choices=(1, 2, 3))
        q.add_argument("--dims", type=_triple)
        q.add_argument("--kappa", type=int)
        q.add_argument("--window", help="scale window cell,top (default 0,2)")
        q.add_argument("--j", type=_triple)
        q.add_argument("--law")
    q = nsub.add_parser("compare")
    q.add_argument("--case", type=int, choices=(1, 2, 3))
    q.add_argument("--j", type=_triple)
    q.add_argument("--kappa", type=int)

    p = sub.add_parser("verify-all", help="run the full verification suite")
    p.add_argument("--inject-broken-lattice", action="store_true",
                   help="negative control: break the case 1 lattice")

    p = sub.add_parser("figures", help="emit figure data (CSV, SVG, PNG)")
    p.add_argument("--kappa", type=int)
    p.add_argument("--no-render", action="store_true",
                   help="skip the PNG rendering step")
    return parser


_DISPATCH = {
    "haar": cmd_haar,
    "mart": cmd_mart,
    "shear": cmd_shear,
    "shards": cmd_shards,
    "nil": cmd_nil,
    "verify-all": cmd_verify_all,
    "figures": cmd_figures,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = load_config(args.config) if args.config else {}
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    cfg = RunConfig(args, file_values)
    try:
        return _DISPATCH[args.command](cfg)
    except TwistedHaarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
