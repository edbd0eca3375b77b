import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradpoly import errors
from gradpoly.polytope import (
    Polytope,
    check_witness,
    clip,
    cross_validate,
    hausdorff,
    hausdorff_segment,
    hull,
    intersect_chamber,
    membership,
    min_norm_point,
    nearest_point,
    union_convexity,
)

from conftest import model


# -- independent oracles --------------------------------------------------------

def gift_wrap(P):
    """Jarvis march; returns hull vertices counterclockwise."""
    P = [tuple(p) for p in np.unique(np.asarray(P), axis=0)]
    start = min(P)
    out = [start]
    cur = start
    while True:
        cand = P[0] if P[0] != cur else P[1]
        for q in P:
            cr = (cand[0] - cur[0]) * (q[1] - cur[1]) - (cand[1] - cur[1]) * (q[0] - cur[0])
            if cr < 0 or (cr == 0 and np.hypot(q[0] - cur[0], q[1] - cur[1]) > np.hypot(cand[0] - cur[0], cand[1] - cur[1])):
                cand = q
        if cand == start:
            return np.array(out)
        out.append(cand)
        cur = cand


def shoelace(V):
    V = np.asarray(V)
    c = V.mean(axis=0)
    V = V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]
    x, y = V[:, 0], V[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def sutherland_hodgman(poly, a, b):
    """Clip a polygon (ccw vertex list) to {x : a.x <= b}."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


# -- hulls --------------------------------------------------------------------

def test_hull_segment():
    H = hull([[1.0], [-1.0], [0.3]])
    assert H.affine_dim == 1
    assert sorted(H.vertices[:, 0]) == [-1.0, 1.0]


def test_hull_triangle_drops_interior():
    H = hull([[0, 0], [1, 0], [0, 1], [0.5, 0.25]])
    assert len(H.vertices) == 3
    assert not any(np.allclose(v, [0.5, 0.25]) for v in H.vertices)


def test_hull_area_vs_gift_wrapping():
    rng = np.random.default_rng(0)
    P = rng.uniform(0, 1, (10_000, 2))
    H = hull(P)
    assert abs(shoelace(H.vertices) - shoelace(gift_wrap(P))) < 1e-2
    assert cross_validate(H) < 1e-9


def test_hull_degenerate_in_3d():
    # a planar polygon in R^3 keeps its equality
    P = np.array([[0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]], float)
    H = hull(P)
    assert H.affine_dim == 2 and len(H.equalities) == 1
    assert membership(H, [0.5, 0.5, 1.0])
    assert not membership(H, [0.5, 0.5, 1.1])


def test_hull_single_point_and_empty():
    H = hull([[2.0, 3.0]])
    assert H.affine_dim == 0
    with pytest.raises(errors.EmptyCloud):
        hull(np.zeros((0, 2)))


def test_membership_examples():
    H = hull([[0, 0], [2, 0], [0, 2]])
    assert membership(H, H.centroid())
    assert membership(H, [2, 0])
    n, c = next((n, c) for n, c in H.halfspaces if abs(n @ [2, 0] - c) < 1e-12)
    assert not membership(H, np.array([2.0, 0.0]) + 10 * H.tol * n)
    with pytest.raises(errors.DimMismatch):
        membership(H, [1.0, 1.0, 1.0])


def test_json_roundtrip():
    H = hull([[0, 0], [1, 0], [0, 1]])
    H2 = Polytope.from_json(H.to_json())
    assert np.allclose(H2.vertices, H.vertices)


# -- clipping -----------------------------------------------------------------

def test_clip_segment_to_halfline():
    P = intersect_chamber(hull([[-1.0], [1.0]]), np.array([[1.0]]))
    assert np.allclose(sorted(P.vertices[:, 0]), [0, 1])


def test_clip_unchanged_inside():
    P = hull([[1, 0], [2, 0], [1, 1]])
    Q = intersect_chamber(P, np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert hausdorff(P.vertices, Q.vertices) < 1e-12


def test_clip_sl3_triangle_vs_sutherland_hodgman():
    m = model("sl3")
    L = m.chamber_ortho
    rng = np.random.default_rng(1)
    for _ in range(10):
        T = rng.standard_normal((3, 2))
        got = intersect_chamber(hull(T), L)
        poly = list(gift_wrap(T).astype(float))
        for l in L:
            poly = sutherland_hodgman(poly, -l, 0.0)
            if not poly:
                break
        if len(poly) < 3 or shoelace(np.array(poly)) < 1e-12:
            assert got.is_empty or got.affine_dim < 2
            continue
        assert hausdorff(got.vertices, np.array(poly)) < 1e-9


def test_clip_to_empty_and_lower_dim():
    P = hull([[0, 0], [1, 0], [0, 1]])
    assert clip(P, [(np.array([1.0, 0.0]), -1.0)]).is_empty
    # x <= 0 leaves the edge on the y axis
    E = clip(P, [(np.array([1.0, 0.0]), 0.0)])
    assert E.affine_dim == 1
    assert np.allclose(sorted(E.vertices[:, 1]), [0, 1])


# -- nearest points -----------------------------------------------------------

def test_nearest_on_segment():
    q, d = nearest_point([hull([[0.0], [1.0]])], [2.0])
    assert q[0] == pytest.approx(1.0) and d == pytest.approx(1.0)
    q, d = nearest_point([hull([[0.0], [1.0]])], [0.4])
    assert q[0] == pytest.approx(0.4) and d == 0.0


def test_nearest_cloud_vs_linear_scan():
    rng = np.random.default_rng(2)
    C = rng.standard_normal((500, 3))
    for _ in range(20):
        p = rng.standard_normal(3) * 2
        q, d = nearest_point(C, p)
        j = np.argmin(np.linalg.norm(C - p, axis=1))
        assert np.allclose(q, C[j]) and d == pytest.approx(np.linalg.norm(C[j] - p))


def test_min_norm_point_vs_qp():
    from scipy.optimize import minimize
    rng = np.random.default_rng(3)
    for _ in range(10):
        V = rng.standard_normal((6, 3)) + 1.5
        x = min_norm_point(V)
        res = minimize(lambda lam: np.sum((lam @ V) ** 2), np.full(6, 1 / 6), method="SLSQP",
                       bounds=[(0, 1)] * 6, constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1}],
                       options={"ftol": 1e-15, "maxiter": 500})
        assert np.linalg.norm(x) <= np.linalg.norm(res.x @ V) + 1e-7


# -- convexity ----------------------------------------------------------------

def test_single_polytope_convex():
    v = union_convexity([hull([[0, 0], [1, 0], [0, 1]])])
    assert v.is_convex and v.witness is None


def test_two_intervals_witness():
    S = [hull([[-2.0], [-1.0]]), hull([[1.0], [2.0]])]
    v = union_convexity(S, tol=1e-2, probes=500, seed=0)
    assert not v.is_convex
    w = v.witness
    assert abs(w.center[0]) < 1e-6 and w.radius == pytest.approx(1.0, abs=1e-6)
    assert sorted(c[0] for c in w.contacts) == pytest.approx([-1.0, 1.0], abs=1e-6)
    assert check_witness(S, w, 1e-6)


def test_L_shape_witness_dense_grid():
    A = hull([[0, 0], [2, 0], [2, 1], [0, 1]])
    B = hull([[0, 0], [1, 0], [1, 2], [0, 2]])
    v = union_convexity([A, B], tol=1e-2, probes=2000, seed=1)
    assert not v.is_convex and v.witness is not None
    w = v.witness
    # dense-grid membership oracle: no grid point of the union inside the ball
    g = np.linspace(0, 2, 401)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = ((pts[:, 1] <= 1) | (pts[:, 0] <= 1))
    U = pts[inside]
    assert np.min(np.linalg.norm(U - w.center, axis=1)) >= w.radius - 1e-2
    # contacts lie on the two reentrant edges x = 1 (y >= 1) and y = 1 (x >= 1)
    on_edges = [abs(c[0] - 1) < 1e-6 and c[1] >= 1 - 1e-6 or abs(c[1] - 1) < 1e-6 and c[0] >= 1 - 1e-6 for c in w.contacts]
    assert all(on_edges)
    assert 1e-2 < v.max_gap <= np.sqrt(2) / 2 * 1 + 1e-9


def test_dense_cloud_of_disk_is_convex():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, (20000, 2))
    X = X[np.linalg.norm(X, axis=1) <= 1]
    v = union_convexity(X, tol=5e-2, probes=1000, seed=0)
    assert v.is_convex and v.heuristic


def test_annulus_cloud_not_convex():
    rng = np.random.default_rng(5)
    t = rng.uniform(0, 2 * np.pi, 5000)
    X = np.column_stack([np.cos(t), np.sin(t)])
    v = union_convexity(X, tol=1e-2, probes=1000, seed=0)
    assert not v.is_convex
    assert v.witness is not None and check_witness(X, v.witness, 1e-6)


def test_hausdorff_segment():
    P = hull([[0, 0], [1, 1]])
    assert hausdorff_segment(P, [0, 0], [1, 1]) < 1e-9
    assert hausdorff_segment(P, [0, 0], [2, 2]) == pytest.approx(np.sqrt(2), abs=1e-9)


# -- properties ---------------------------------------------------------------

pts2 = st.lists(st.tuples(st.floats(-10, 10, allow_nan=False), st.floats(-10, 10, allow_nan=False)), min_size=3, max_size=40)


@settings(max_examples=60, deadline=None)
@given(pts2)
def test_hull_contains_inputs(ps):
    P = np.array(ps)
    H = hull(P, validate=False)
    for p in P:
        assert membership(H, p, 1e-7)


@settings(max_examples=40, deadline=None)
@given(pts2, st.tuples(st.floats(-20, 20), st.floats(-20, 20)))
def test_nearest_point_not_beaten_by_vertices(ps, p0):
    H = hull(np.array(ps), validate=False)
    q, d = nearest_point([H], np.array(p0))
    assert membership(H, q, 1e-6)
    assert d <= np.min(np.linalg.norm(H.vertices - np.array(p0), axis=1)) + 1e-9


@settings(max_examples=30, deadline=None)
@given(pts2)
def test_convex_polytope_is_convex(ps):
    H = hull(np.array(ps), validate=False)
    assert union_convexity([H], tol=1e-6, probes=200).is_convex
