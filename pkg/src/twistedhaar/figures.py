"""Plot-data emission: polygon and rectangle families as CSV, SVG and PNG.

CSV is the primary artifact and the SVG writer is a small serializer with no
plotting dependency; a PNG rendering of the same data is saved alongside via
matplotlib for quick viewing.  All coordinates are exact dyadic values
formatted as decimal floats, so identical inputs produce identical bytes.

Emitted families:

* the three Euclidean grid systems (axis-aligned squares and their images
  under the inverse shears: slanted parallelograms),
* stacked-tile profiles (spatial cell versus central interval),
* central (t1, t2) slices of the raw shards, one per case, the third a
  staircase,
* the sheared central grid of the type 3 analytic shards (parallelograms
  obtained by reading (u, v) boxes in t-coordinates).
"""

from __future__ import annotations

import os

from .dyadic import DyadicRational as DR
from .haar import EuclidSystem
from .nilhaar import NilSystem, analytic_family, shard_central_box
from .shards import FactorSpec, Profile, raw_shard, stacked_tile

Point = tuple[float, float]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# ---- geometry builders ----

def euclid_grid_polygons(sys: EuclidSystem, system: int,
                         display_res: int = 2) -> list[list[Point]]:
    """Cells of one twisted dyadic grid as polygons on the first two axes.

    Unit cells at resolution 2^-display_res are mapped through the inverse
    shear; system 1 stays axis-aligned.
    """
    shear = sys.pull(system)
    if shear is None:
        inv = None
    else:
        inv = shear.shear.inverse().matrix
    n = 1 << (sys.extent_exp + display_res)
    h = 2.0 ** -display_res
    polys = []
    for i in range(n):
        for j in range(n):
            corners = [(i * h, j * h), ((i + 1) * h, j * h),
                       ((i + 1) * h, (j + 1) * h), (i * h, (j + 1) * h)]
            if inv is None:
                polys.append(corners)
                continue
            # the shear couples axis 0 with axis m; restrict to the plane
            m = sys.m
            a, b = inv[0][0], inv[0][m]
            c, d = inv[m][0], inv[m][m]
            polys.append([(a * x + b * y, c * x + d * y) for x, y in corners])
    return polys


def stacked_tile_rects(spec: FactorSpec, j: int) -> list[tuple[str, list[float]]]:
    """(key, [x_lo, x_hi, t_lo, t_hi]) rows for a one-dimensional factor."""
    region = stacked_tile(spec, j)
    lo, hi = region.boxes[0]
    ncell = 1 << spec.profile.res_exp
    width = (hi - lo).mul_pow2(-spec.profile.res_exp)
    rows = []
    for key in sorted(region.fibers):
        x0 = lo + width * key[0]
        a, b = region.fibers[key][0]
        rows.append((";".join(str(k) for k in key),
                     [x0.to_float(), (x0 + width).to_float(),
                      a.to_float(), b.to_float()]))
    return rows


def raw_slice_rects(case: int, specs, j) -> list[tuple[str, list[float]]]:
    """(key, [t1_lo, t1_hi, t2_lo, t2_hi]) rows, one row per fiber rectangle."""
    region = raw_shard(case, specs, j)
    rows = []
    for key in sorted(region.fibers):
        for r in region.fibers[key]:
            rows.append((";".join(str(k) for k in key),
                         [x.to_float() for x in r]))
    return rows


def theta_grid_polygons(ns: NilSystem, j) -> list[list[Point]]:
    """Central slices of the type 3 analytic shards at one scale triple:
    each (u, v) box becomes the t-parallelogram {(u + t2, t2)}."""
    polys = []
    seen = set()
    for shard in analytic_family(ns, 3, j):
        u1, u2, v1, v2 = shard_central_box(ns, shard)
        key = (u1.to_float(), u2.to_float(), v1.to_float(), v2.to_float())
        if key[0:4] in seen:
            continue
        seen.add(key[0:4])
        a, b, c, d = key
        polys.append([(a + c, c), (b + c, c), (b + d, d), (a + d, d)])
    polys.sort()
    return polys


# ---- serializers ----

def write_polygon_csv(path, name: str, polys: list[list[Point]]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("figure,shape,vertex,x,y\n")
        for si, poly in enumerate(polys):
            for vi, (x, y) in enumerate(poly):
                fh.write(f"{name},{si},{vi},{_fmt(x)},{_fmt(y)}\n")


def write_rect_csv(path, name: str, rows: list[tuple[str, list[float]]]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("figure,key,rect,x_lo,x_hi,y_lo,y_hi\n")
        for ri, (key, r) in enumerate(rows):
            vals = ",".join(_fmt(v) for v in r)
            fh.write(f"{name},{key or '-'},{ri},{vals}\n")


def _rect_polys(rows: list[tuple[str, list[float]]]) -> list[list[Point]]:
    out = []
    for _key, (x0, x1, y0, y1) in rows:
        out.append([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    return out


def write_svg_polygons(path, polys: list[list[Point]], size: int = 480) -> None:
    """Minimal standalone SVG: outlined polygons scaled into a square view."""
    xs = [x for poly in polys for x, _ in poly]
    ys = [y for poly in polys for _, y in poly]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span = max(x1 - x0, y1 - y0) or 1.0
    pad = 0.05 * span
    scale = size / (span + 2 * pad)

    def sx(x: float) -> str:
        return _fmt((x - x0 + pad) * scale)

    def sy(y: float) -> str:
        return _fmt(size - (y - y0 + pad) * scale)   # flip y for screen space

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for poly in polys:
        pts = " ".join(f"{sx(x)},{sy(y)}" for x, y in poly)
        lines.append(f'<polygon points="{pts}" fill="none" stroke="black" '
                     'stroke-width="1"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def render_png(path, polys: list[list[Point]], title: str) -> None:
    """Matplotlib rendering of the same polygon data, saved next to the CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon as MplPolygon

    fig, ax = plt.subplots(figsize=(5, 5))
    for poly in polys:
        ax.add_patch(MplPolygon(poly, closed=True, fill=False,
                                edgecolor="black", linewidth=0.8))
    ax.autoscale_view()
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


# ---- the full bundle ----

def emit_polygon_figure(out_dir: str, name: str, polys, render: bool = True) -> list[str]:
    paths = []
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_polygon_csv(csv_path, name, polys)
    paths.append(csv_path)
    svg_path = os.path.join(out_dir, f"{name}.svg")
    write_svg_polygons(svg_path, polys)
    paths.append(svg_path)
    if render:
        png_path = os.path.join(out_dir, f"{name}.png")
        render_png(png_path, polys, name)
        paths.append(png_path)
    return paths


def emit_rect_figure(out_dir: str, name: str, rows, render: bool = True) -> list[str]:
    paths = []
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_rect_csv(csv_path, name, rows)
    paths.append(csv_path)
    polys = _rect_polys(rows)
    svg_path = os.path.join(out_dir, f"{name}.svg")
    write_svg_polygons(svg_path, polys)
    paths.append(svg_path)
    if render:
        png_path = os.path.join(out_dir, f"{name}.png")
        render_png(png_path, polys, name)
        paths.append(png_path)
    return paths


def make_all(out_dir: str, seed: int = 0, kappa: int = 0,
             render: bool = True) -> list[str]:
    """Emit every figure family into out_dir; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    sys = EuclidSystem(m=1, extent_exp=0, res_exp=3)
    for i in (1, 2, 3):
        polys = euclid_grid_polygons(sys, i)
        paths += emit_polygon_figure(out_dir, f"euclid_system{i}_grid", polys,
                                     render)

    zero = FactorSpec(1, Profile.zero(), kappa)
    stair = FactorSpec(1, Profile.staircase(1, 2, seed), kappa)
    paths += emit_rect_figure(out_dir, "stacked_tile_zero",
                              stacked_tile_rects(zero, 0), render)
    paths += emit_rect_figure(out_dir, "stacked_tile_staircase",
                              stacked_tile_rects(stair, 0), render)

    def specs(profile: Profile) -> tuple:
        return (FactorSpec(1, profile, kappa), FactorSpec(2, profile, kappa),
                FactorSpec(3, Profile.zero(), kappa))

    slices = {1: (1, 0, -1), 2: (2, 0, 1), 3: (0, 0, 1)}
    for case, j in slices.items():
        rows = raw_slice_rects(case, specs(Profile.zero()), j)
        paths += emit_rect_figure(out_dir, f"shard_case{case}_slice", rows,
                                  render)

    ns = NilSystem(dims=(1, 1, 1), kappa=kappa, cell_scale=0, top_scale=2)
    polys = theta_grid_polygons(ns, (1, 1, 1))
    paths += emit_polygon_figure(out_dir, "theta_type3_grid", polys, render)
    return paths
