"""Two-dimensional diagnostic plots: SVG with a CSV twin holding the same numbers."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .errors import DimMismatch, PlaneDegenerate
from .io import FLOAT_FMT, atomic_write_text, comment_lines

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(x) -> str:
    return FLOAT_FMT % float(x)


def plane_map(dim: int, plane=None) -> np.ndarray:
    """2 x dim matrix sending a-coordinates to plot coordinates.

    ``plane`` holds two functionals; it is required when dim > 2.  In
    dimension 1 the second coordinate is identically 0.
    """
    if plane is None:
        if dim > 2:
            raise PlaneDegenerate(f"a {dim}-dimensional space needs an explicit plane")
        M = np.zeros((2, dim))
        M[:dim, :dim] = np.eye(dim)
        return M
    M = np.asarray(plane, dtype=float)
    if M.shape != (2, dim):
        raise PlaneDegenerate(f"plane must be two functionals of length {dim}, got shape {M.shape}")
    if np.linalg.matrix_rank(M, tol=1e-12) < 2:
        raise PlaneDegenerate("plane functionals are linearly dependent")
    return M


def chamber_walls(L: np.ndarray, radius: float) -> list:
    """Boundary rays of a 2-D cone {x : L x >= 0} (or the wall point in 1-D), as segments."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.size == 0:
        return []
    d = L.shape[1]
    if d == 1:
        return [(np.zeros(1), np.zeros(1))]
    segs = []
    for l in L:
        t = np.array([-l[1], l[0]])
        for s in (t, -t):
            if np.all(L @ s >= -1e-12):
                segs.append((np.zeros(2), radius * s / np.linalg.norm(s)))
                break
    return segs


def _order_polygon(P: np.ndarray) -> np.ndarray:
    if len(P) <= 2:
        return P
    c = P.mean(axis=0)
    ang = np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0])
    return P[np.argsort(ang, kind="stable")]


@dataclass
class PlotData:
    polygons: list = field(default_factory=list)  # (label, array k x 2)
    points: list = field(default_factory=list)  # (label, array k x 2)
    walls: list = field(default_factory=list)  # (p, q) segments
    vertex_labels: bool = True


def wall_segments(m, radius: float) -> list:
    """Chamber walls of a model in display coordinates."""
    L = m.chamber_ortho
    if L.size == 0:
        return []
    if m.rank == 1:
        z = m.display(np.zeros(1))
        return [(z, z)]
    if m.rank != 2:
        return []
    return [(m.display(a), m.display(b)) for a, b in chamber_walls(L, radius)]


def decomposition_walls(m, d) -> list:
    """Codim-one spans of a decomposition clipped to P, in display coordinates."""
    from .strata import _vertices_of
    out = []
    for a, b in d.hyperplanes:
        cons = list(d.P.facets) + [(a, b), (tuple(-t for t in a), -b)]
        V = _vertices_of(cons, d.rank)
        if len(V) < 2:
            continue
        V = sorted(V)
        lo, hi = V[0], V[-1]
        out.append(tuple(m.display(m.rational_to_ortho([float(t) for t in v])) for v in (lo, hi)))
    return out


def build_plot(polytopes=(), cloud=None, weights=None, walls=(), plane=None, dim: int | None = None) -> PlotData:
    """Project everything through the plane map.

    ``polytopes`` are vertex arrays and ``walls`` are segment endpoint
    pairs, all in the same coordinates of dimension ``dim``.
    """
    arrays = [np.atleast_2d(np.asarray(p, dtype=float)) for p in polytopes]
    if dim is None:
        for a in arrays + [cloud, weights]:
            if a is not None and len(a):
                dim = np.atleast_2d(np.asarray(a)).shape[1]
                break
    if dim is None:
        raise PlaneDegenerate("nothing to plot")
    for a in arrays + [np.atleast_2d(np.asarray(x, dtype=float)) for x in (cloud, weights) if x is not None and len(x)]:
        if a.shape[1] != dim:
            raise DimMismatch(f"plot inputs mix dimensions {a.shape[1]} and {dim}")
    M = plane_map(dim, plane)
    out = PlotData()
    for i, V in enumerate(arrays):
        W = V @ M.T
        out.polygons.append((f"P{i}", _order_polygon(W) if len(W) > 2 else W[np.lexsort(W.T[::-1])]))
    if cloud is not None and len(cloud):
        out.points.append(("cloud", np.atleast_2d(np.asarray(cloud, dtype=float)) @ M.T))
    if weights is not None and len(weights):
        out.points.append(("weight", np.atleast_2d(np.asarray(weights, dtype=float)) @ M.T))
    for a, b in walls:
        out.walls.append((M @ np.asarray(a, dtype=float), M @ np.asarray(b, dtype=float)))
    return out


def extent(polytopes=(), cloud=None, weights=None) -> float:
    arrs = [np.asarray(p, dtype=float) for p in polytopes]
    arrs += [np.asarray(a, dtype=float) for a in (cloud, weights) if a is not None and len(a)]
    return max([float(np.abs(a).max()) for a in arrs if a.size], default=1.0) * 1.2


def to_csv(data: PlotData, tolerances: dict | None = None, seed=None) -> str:
    rows = []
    names = []
    for j, (label, P) in enumerate(data.polygons):
        for k, p in enumerate(P):
            names.append(("polygon", label, k))
            rows.append(p)
    for label, P in data.points:
        for k, p in enumerate(P):
            names.append(("point", label, k))
            rows.append(p)
    for k, (a, b) in enumerate(data.walls):
        names.append(("wall", f"W{k}", 0))
        rows.append(a)
        names.append(("wall", f"W{k}", 1))
        rows.append(b)
    lines = comment_lines(tolerances, seed)
    lines.append("kind,label,index,x,y")
    for (kind, label, k), p in zip(names, rows):
        lines.append(f"{kind},{label},{k},{_f(p[0])},{_f(p[1])}")
    return "\n".join(lines) + "\n"


def to_svg(data: PlotData, size: int = 480) -> str:
    pts = [p for _, P in data.polygons for p in P] + [p for _, P in data.points for p in P]
    pts += [p for seg in data.walls for p in seg]
    A = np.array(pts, dtype=float).reshape(-1, 2) if pts else np.zeros((1, 2))
    lo, hi = A.min(axis=0), A.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.1 * span.max()
    lo, hi = lo - pad, hi + pad
    s = (size - 20) / max(hi[0] - lo[0], hi[1] - lo[1])
    # data coordinates are written verbatim; the group transform maps them to pixels
    tx, ty = 10 - s * lo[0], size - 10 + s * lo[1]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           f'<g transform="matrix({_f(s)} 0 0 {_f(-s)} {_f(tx)} {_f(ty)})" stroke-width="{_f(1.5 / s)}">']
    for k, (a, b) in enumerate(data.walls):
        out.append(f'<line class="wall" x1="{_f(a[0])}" y1="{_f(a[1])}" x2="{_f(b[0])}" y2="{_f(b[1])}" '
                   f'stroke="#888" stroke-dasharray="{_f(4 / s)}"/>')
    for j, (label, P) in enumerate(data.polygons):
        col = _COLORS[j % len(_COLORS)]
        coords = " ".join(f"{_f(p[0])},{_f(p[1])}" for p in P)
        tag = "polyline" if len(P) <= 2 else "polygon"
        fill = "none" if tag == "polyline" else col + "33"
        out.append(f'<{tag} class="polytope" id="{escape(label)}" points="{coords}" fill="{fill}" stroke="{col}"/>')
        for p in P:
            out.append(f'<circle class="vertex" cx="{_f(p[0])}" cy="{_f(p[1])}" r="{_f(3 / s)}" fill="{col}"/>')
    for label, P in data.points:
        r = 1.2 if label == "cloud" else 4.0
        col = "#444" if label == "cloud" else "#000"
        for p in P:
            out.append(f'<circle class="{escape(label)}" cx="{_f(p[0])}" cy="{_f(p[1])}" r="{_f(r / s)}" fill="{col}"/>')
    out.append("</g>")
    # labels outside the flipped group so text is upright
    if data.vertex_labels:
        for label, P in data.polygons:
            for p in P:
                x, y = s * p[0] + tx, -s * p[1] + ty
                out.append(f'<text x="{x:.2f}" y="{y - 6:.2f}" font-size="10">({p[0]:.4g}, {p[1]:.4g})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(data: PlotData, svg_path, csv_path, tolerances: dict | None = None, seed=None) -> None:
    atomic_write_text(svg_path, to_svg(data))
    atomic_write_text(csv_path, to_csv(data, tolerances, seed))
