import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from gradpoly import errors
from gradpoly.plot import (
    build_plot,
    chamber_walls,
    decomposition_walls,
    emit_plot,
    plane_map,
    to_csv,
    to_svg,
    wall_segments,
)
from gradpoly.strata import decompose_P0

from conftest import model

NS = "{http://www.w3.org/2000/svg}"


def csv_rows(text):
    rows = [l.split(",") for l in text.splitlines() if l and not l.startswith("#")]
    assert rows[0] == ["kind", "label", "index", "x", "y"]
    return rows[1:]


def svg_numbers(svg, tag):
    root = ET.fromstring(svg)
    out = []
    for el in root.iter(NS + tag):
        if tag in ("polygon", "polyline"):
            out.append([tuple(p.split(",")) for p in el.get("points").split()])
        elif tag == "line":
            out.append([(el.get("x1"), el.get("y1")), (el.get("x2"), el.get("y2"))])
    return out


def test_segment_two_labeled_endpoints():
    data = build_plot([np.array([[0.0], [0.5]])])
    svg = to_svg(data)
    ET.fromstring(svg)
    assert len(svg_numbers(svg, "polyline")) == 1
    labels = re.findall(r"<text[^>]*>\(([^)]*)\)</text>", svg)
    assert sorted(labels) == ["0, 0", "0.5, 0"]


def test_sl3_wedge_and_segment_match_csv():
    m = model("sl3")
    seg = np.array([[1 / 6, 1 / 6, -1 / 3], [2 / 3, -1 / 3, -1 / 3]])
    plane = [[1, -1, 0], [0, 1, -1]]
    walls = wall_segments(m, 1.0)
    assert len(walls) == 2
    data = build_plot([seg], walls=walls, plane=plane, dim=3)
    svg, csv = to_svg(data), to_csv(data, {"hull": 1e-9}, seed=3)
    assert csv.startswith("# tolerances:") and "# seed: 3" in csv
    rows = csv_rows(csv)
    poly = [tuple(r[3:]) for r in rows if r[0] == "polygon"]
    assert svg_numbers(svg, "polyline") == [poly]
    wall_csv = [tuple(r[3:]) for r in rows if r[0] == "wall"]
    assert [p for seg_ in svg_numbers(svg, "line") for p in seg_] == wall_csv
    # walls of the sorted-eigenvalue chamber lie on the two plane axes x = 0 and y = 0
    ends = [data.walls[k][1] for k in range(2)]
    assert sorted(int(np.argmax(np.abs(e))) for e in ends) == [0, 1]
    assert all(np.min(np.abs(e)) < 1e-12 for e in ends)


def test_cross_decomposition_plot():
    m = model("cross")
    d = decompose_P0(m)
    polys = [np.array([m.display(m.rational_to_ortho([float(t) for t in v])) for v in c.vertices]) for c in d.chambers]
    walls = decomposition_walls(m, d)
    data = build_plot(polys, walls=walls, dim=2)
    assert len(data.polygons) == 4 and all(len(P) == 3 for _, P in data.polygons)
    # the two axes are among the walls
    axes = [w for w in walls if np.allclose(sorted(map(tuple, np.round(w, 12))), [(-1, 0), (1, 0)])
            or np.allclose(sorted(map(tuple, np.round(w, 12))), [(0, -1), (0, 1)])]
    assert len(axes) == 2
    svg = to_svg(data)
    assert len(svg_numbers(svg, "polygon")) == 4
    assert len(svg_numbers(svg, "line")) == len(walls)


def test_points_in_csv():
    data = build_plot(cloud=np.array([[0.1, 0.2], [0.3, 0.4]]), weights=np.array([[1.0, 0.0]]))
    rows = csv_rows(to_csv(data))
    assert [r[1] for r in rows] == ["cloud", "cloud", "weight"]
    assert float(rows[1][4]) == 0.4


def test_emit_plot_writes_both(tmp_path):
    data = build_plot([np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])])
    emit_plot(data, tmp_path / "p.svg", tmp_path / "p.csv", {"t": 1e-9}, 0)
    assert (tmp_path / "p.svg").read_text().startswith("<svg")
    assert len(csv_rows((tmp_path / "p.csv").read_text())) == 3


def test_rank1_wall_is_origin():
    w = wall_segments(model("sl2"), 1.0)
    assert len(w) == 1 and np.allclose(w[0][0], 0)
    assert wall_segments(model("torus1"), 1.0) == []


def test_chamber_walls_quadrant():
    segs = chamber_walls(np.eye(2), 2.0)
    ends = sorted(tuple(np.round(b, 12)) for _, b in segs)
    assert ends == [(0.0, 2.0), (2.0, 0.0)]


def test_plane_errors():
    with pytest.raises(errors.PlaneDegenerate):
        plane_map(3)
    with pytest.raises(errors.PlaneDegenerate):
        plane_map(3, [[1, 0, 0], [2, 0, 0]])
    with pytest.raises(errors.PlaneDegenerate):
        plane_map(3, [[1, 0], [0, 1]])
    with pytest.raises(errors.PlaneDegenerate):
        build_plot()
    with pytest.raises(errors.DimMismatch):
        build_plot([np.zeros((2, 2)), np.zeros((2, 3))], plane=[[1, 0], [0, 1]])


def test_one_dim_plane():
    assert np.array_equal(plane_map(1), [[1.0], [0.0]])
