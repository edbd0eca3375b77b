"""Floating-point convex geometry: hulls, clipping, nearest points, convexity of unions.

A :class:`Polytope` keeps both descriptions: a vertex array and a list of
halfspaces ``n . x <= c``, plus equalities ``n . x = c`` cutting out its
affine span when it is lower dimensional.  The empty set is a regular
value (``Polytope.empty``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, cKDTree

from .errors import DimMismatch, EmptyCloud, GradpolyError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Polytope:
    vertices: np.ndarray
    halfspaces: tuple
    equalities: tuple
    dim: int
    tol: float
    origin: np.ndarray = None
    basis: np.ndarray = None  # columns span the affine hull directions

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    @property
    def affine_dim(self) -> int:
        return -1 if self.is_empty else int(self.basis.shape[1])

    @classmethod
    def empty(cls, dim: int, tol: float = DEFAULT_TOL) -> "Polytope":
        return cls(np.zeros((0, dim)), (), (), dim, tol, np.zeros(dim), np.zeros((dim, 0)))

    @classmethod
    def from_data(cls, V, H, E, tol) -> "Polytope":
        V = np.asarray(V, dtype=float)
        return hull(V, tol)

    def residuals(self, x) -> np.ndarray:
        """c - n.x for halfspaces and -|c - n.x| for equalities."""
        x = np.asarray(x, dtype=float)
        r = [c - n @ x for n, c in self.halfspaces] + [-abs(c - n @ x) for n, c in self.equalities]
        return np.array(r, dtype=float)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "affine_dim": self.affine_dim,
            "tol": self.tol,
            "vertices": self.vertices.tolist(),
            "halfspaces": [{"normal": n.tolist(), "offset": float(c)} for n, c in self.halfspaces],
            "equalities": [{"normal": n.tolist(), "offset": float(c)} for n, c in self.equalities],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Polytope":
        V = np.array(d["vertices"], dtype=float).reshape(-1, d["dim"])
        if len(V) == 0:
            return cls.empty(d["dim"], d.get("tol", DEFAULT_TOL))
        return hull(V, d.get("tol", DEFAULT_TOL))


def _dedupe_rows(P: np.ndarray, tol: float) -> np.ndarray:
    if len(P) == 0:
        return P
    keys = np.round(P / max(tol, 1e-15)).astype(np.int64) if tol > 0 else P
    _, idx = np.unique(keys, axis=0, return_index=True)
    return P[np.sort(idx)]


def _span(P: np.ndarray, tol: float):
    """Centroid, orthonormal directions (columns) with extent > tol, and the complement."""
    c = P.mean(axis=0)
    X = P - c
    if len(P) == 1:
        return c, np.zeros((P.shape[1], 0)), np.eye(P.shape[1])
    # principal directions from the small d x d scatter matrix
    w, U = np.linalg.eigh(X.T @ X)
    vt = U[:, ::-1].T
    ext = np.max(np.abs(X @ vt.T), axis=0)
    keep = np.zeros(P.shape[1], dtype=bool)
    keep[: len(ext)] = ext > tol
    # singular directions are ordered, so keep is a prefix
    k = int(np.sum(keep))
    return c, vt[:k].T, vt[k:].T


def _equalities(origin, comp) -> tuple:
    return tuple((comp[:, j].copy(), float(comp[:, j] @ origin)) for j in range(comp.shape[1]))


def _merge_halfspaces(H: list, tol: float) -> tuple:
    out: list = []
    seen = set()
    ct = max(tol, 1e-12)
    for n, c in H:
        nn = np.linalg.norm(n)
        if nn == 0:
            continue
        n, c = n / nn, c / nn
        # duplicates (coplanar Qhull facets) agree far below these grids
        key = tuple(np.round(n / 1e-9).astype(np.int64)) + (int(round(c / ct)),)
        if key not in seen:
            seen.add(key)
            out.append((n, float(c)))
    out.sort(key=lambda h: tuple(np.round(h[0], 12)) + (h[1],))
    return tuple(out)


def hull(points, tol: float = DEFAULT_TOL, validate: bool = True) -> Polytope:
    """Convex hull with explicit affine span for degenerate inputs."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    if len(P) == 0:
        raise EmptyCloud("hull of an empty point set")
    d = P.shape[1]
    P = _dedupe_rows(P, tol * 1e-3) if tol > 0 else np.unique(P, axis=0)
    origin, B, comp = _span(P, tol)
    k = B.shape[1]
    eqs = _equalities(origin, comp)
    if k == 0:
        V = origin.reshape(1, d)
        return Polytope(V, (), eqs, d, tol, origin, B)
    Y = (P - origin) @ B
    if k == 1:
        i0, i1 = int(np.argmin(Y[:, 0])), int(np.argmax(Y[:, 0]))
        V = P[[i0, i1]]
        u = B[:, 0]
        H = [(u, float(u @ P[i1])), (-u, float(-u @ P[i0]))]
        return Polytope(V[np.lexsort(V.T[::-1])], _merge_halfspaces(H, tol), eqs, d, tol, origin, B)
    ch = ConvexHull(Y)
    V = P[np.sort(ch.vertices)]
    H = []
    for eq in ch.equations:
        ny, off = eq[:-1], eq[-1]
        nx = B @ ny
        H.append((nx, float(-off + nx @ origin)))
    poly = Polytope(V[np.lexsort(V.T[::-1])], _merge_halfspaces(H, tol), eqs, d, tol, origin, B)
    if validate and k <= 4:
        err = cross_validate(poly)
        if err > max(1e-6, 10 * tol):
            raise GradpolyError(f"hull cross-validation failed: vertex mismatch {err:.3e}")
    return poly


def _halfspaces_in_span(poly: Polytope, H) -> tuple[np.ndarray, np.ndarray]:
    A = np.array([poly.basis.T @ n for n, _ in H]).reshape(len(H), poly.basis.shape[1])
    b = np.array([c - n @ poly.origin for n, c in H], dtype=float)
    return A, b


def cross_validate(poly: Polytope) -> float:
    """Max distance between stored vertices and those recomputed from the halfspaces."""
    if poly.affine_dim < 2:
        return 0.0
    A, b = _halfspaces_in_span(poly, poly.halfspaces)
    inner = (poly.vertices - poly.origin) @ poly.basis
    y0 = inner.mean(axis=0)
    hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), y0)
    W = hs.intersections
    d1 = cKDTree(W).query(inner)[0].max()
    d2 = cKDTree(inner).query(W)[0].max()
    return float(max(d1, d2))


def membership(poly: Polytope, x, tol: float | None = None) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (poly.dim,):
        raise DimMismatch(f"point of dimension {x.shape} for a polytope in R^{poly.dim}")
    if poly.is_empty:
        return False
    t = poly.tol if tol is None else tol
    r = poly.residuals(x)
    return bool(r.size == 0 or np.all(r >= -t))


# ---------------------------------------------------------------------------
# clipping

def _chebyshev(A: np.ndarray, b: np.ndarray):
    norms = np.linalg.norm(A, axis=1)
    k = A.shape[1]
    c = np.zeros(k + 1)
    c[-1] = -1.0
    Aub = np.hstack([A, norms[:, None]])
    res = linprog(c, A_ub=Aub, b_ub=b, bounds=[(None, None)] * k + [(0, None)], method="highs")
    if res.status != 0:
        return None, -1.0
    return res.x[:k], float(res.x[-1])


def _clip_param(A: np.ndarray, b: np.ndarray, origin: np.ndarray, B: np.ndarray, tol: float):
    """Vertices (ambient coordinates) of {origin + B y : A y <= b}, or None if empty."""
    k = B.shape[1]
    small = np.linalg.norm(A, axis=1) <= 1e-14 if len(A) else np.zeros(0, dtype=bool)
    if np.any(b[small] < -tol):
        return None
    A, b = A[~small], b[~small]
    if k == 0:
        return origin.reshape(1, -1)
    if len(A) == 0:
        raise GradpolyError("unbounded clip region")
    if k == 1:
        a = A[:, 0]
        lo = max([bi / ai for ai, bi in zip(a, b) if ai < 0], default=-np.inf)
        hi = min([bi / ai for ai, bi in zip(a, b) if ai > 0], default=np.inf)
        if lo > hi + tol:
            return None
        if hi < lo:
            lo = hi = 0.5 * (lo + hi)
        return origin + np.outer([lo, hi], B[:, 0])
    y0, r = _chebyshev(A, b)
    if y0 is None:
        return None
    if r > tol:
        hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), y0)
        return origin + hs.intersections @ B.T
    # lower dimensional: find implicit equalities by maximizing each slack
    implicit = []
    for i in range(len(A)):
        res = linprog(A[i], A_ub=A, b_ub=b + tol, bounds=[(None, None)] * k, method="highs")
        if res.status == 0 and b[i] - res.fun <= 2 * tol:
            implicit.append(i)
        elif res.status == 2:
            return None
    if not implicit:
        return (origin + B @ y0).reshape(1, -1)
    E = A[implicit]
    e = b[implicit]
    ypart, *_ = np.linalg.lstsq(E, e, rcond=None)
    _, s, vt = np.linalg.svd(E)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    N = vt[rank:].T
    if N.shape[1] == k:
        return (origin + B @ y0).reshape(1, -1)
    keep = [i for i in range(len(A)) if i not in implicit]
    A2 = A[keep] @ N
    b2 = b[keep] - A[keep] @ ypart
    return _clip_param(A2, b2, origin + B @ ypart, B @ N, tol)


def clip(poly: Polytope, halfspaces: Sequence, tol: float | None = None) -> Polytope:
    """poly intersected with {n . x <= c}; may be empty."""
    t = poly.tol if tol is None else tol
    if poly.is_empty:
        return poly
    H = list(poly.halfspaces) + [(np.asarray(n, dtype=float), float(c)) for n, c in halfspaces]
    if poly.affine_dim == 0:
        x = poly.vertices[0]
        ok = all(c - n @ x >= -t for n, c in H)
        return poly if ok else Polytope.empty(poly.dim, poly.tol)
    A, b = _halfspaces_in_span(poly, H)
    V = _clip_param(A, b, poly.origin, poly.basis, t)
    if V is None:
        return Polytope.empty(poly.dim, poly.tol)
    return hull(V, poly.tol)


def chamber_halfspaces(L: np.ndarray) -> list:
    """Chamber functionals l.x >= 0 as halfspaces (-l).x <= 0."""
    return [(-np.asarray(l, dtype=float), 0.0) for l in np.atleast_2d(L) if np.any(l)]


def intersect_chamber(poly: Polytope, chamber) -> Polytope:
    """poly intersected with {l_j . x >= 0}; ``chamber`` is an array of functionals."""
    L = np.asarray(chamber, dtype=float)
    if L.size == 0:
        return poly
    return clip(poly, chamber_halfspaces(L.reshape(-1, poly.dim)))


# ---------------------------------------------------------------------------
# nearest points

def min_norm_point(V: np.ndarray, max_iter: int = 1000, eps: float = 1e-12) -> np.ndarray:
    """Wolfe's algorithm: the point of conv(rows of V) closest to the origin."""
    V = np.asarray(V, dtype=float)
    n = len(V)
    if n == 1:
        return V[0].copy()
    j = int(np.argmin(np.einsum("ij,ij->i", V, V)))
    S = [j]
    lam = np.array([1.0])
    x = V[j].copy()
    scale = max(1.0, float(np.max(np.abs(V))))
    for _ in range(max_iter):
        # major cycle
        g = V @ x
        j = int(np.argmin(g))
        if x @ x - g[j] <= eps * scale**2 or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            # affine minimizer over S
            Vs = V[S]
            k = len(S)
            M = np.zeros((k + 1, k + 1))
            M[:k, :k] = Vs @ Vs.T
            M[:k, k] = 1.0
            M[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
            mu = sol[:k]
            if np.all(mu > eps):
                lam = mu
                x = mu @ Vs
                break
            # minor cycle: move toward affine minimizer until a weight hits zero
            mask = mu <= eps
            theta = np.min(lam[mask] / (lam[mask] - mu[mask])) if np.any(lam[mask] - mu[mask] > 0) else 0.0
            theta = min(max(theta, 0.0), 1.0)
            lam = theta * mu + (1 - theta) * lam
            keep = lam > eps
            if not np.any(keep):
                keep[np.argmax(lam)] = True
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ V[S]
    return x


def nearest_in_polytope(poly: Polytope, p0) -> tuple[np.ndarray, float]:
    p0 = np.asarray(p0, dtype=float)
    if poly.is_empty:
        return np.full(poly.dim, np.nan), np.inf
    if membership(poly, p0, 1e-12):
        return p0.copy(), 0.0
    y = min_norm_point(poly.vertices - p0)
    return p0 + y, float(np.linalg.norm(y))


def nearest_point(S, p0, tie_tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Closest point of a cloud (N x d array) or a union of polytopes to p0.

    Ties within ``tie_tol`` are broken by lexicographic order of the point.
    """
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    if isinstance(S, Polytope):
        S = [S]
    if isinstance(S, (list, tuple)):
        cands = [nearest_in_polytope(P, p0) for P in S if not P.is_empty]
        if not cands:
            raise EmptyCloud("nearest point in an empty union")
        pts = np.array([c[0] for c in cands])
        dist = np.array([c[1] for c in cands])
    else:
        pts = np.asarray(S, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if len(pts) == 0:
            raise EmptyCloud("nearest point in an empty cloud")
        if pts.shape[1] != p0.shape[0]:
            raise DimMismatch("cloud and query point dimensions differ")
        dist = np.linalg.norm(pts - p0, axis=1)
    dmin = dist.min()
    ties = np.flatnonzero(dist <= dmin + tie_tol)
    best = ties[np.lexsort(pts[ties].T[::-1])[0]]
    return pts[best].copy(), float(dist[best])


# ---------------------------------------------------------------------------
# convexity of unions

@dataclass
class Witness:
    center: np.ndarray
    radius: float
    contacts: tuple

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius, "contacts": [c.tolist() for c in self.contacts]}


@dataclass
class ConvexityVerdict:
    is_convex: bool
    witness: Witness | None
    probes: int
    tol: float
    max_gap: float
    heuristic: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"is_convex": self.is_convex, "witness": self.witness.to_json() if self.witness else None,
                "probes": self.probes, "tol": self.tol, "max_gap": self.max_gap, "heuristic": self.heuristic}


class _SetDistance:
    """Distance to a cloud (kd-tree) or to a union of polytopes."""

    def __init__(self, S):
        if isinstance(S, Polytope):
            S = [S]
        if isinstance(S, (list, tuple)):
            self.polys = [P for P in S if not P.is_empty]
            if not self.polys:
                raise EmptyCloud("empty union")
            self.points = np.vstack([P.vertices for P in self.polys])
            self.tree = None
        else:
            pts = np.asarray(S, dtype=float)
            if pts.ndim == 1:
                pts = pts.reshape(-1, 1)
            if len(pts) == 0:
                raise EmptyCloud("empty cloud")
            self.polys = None
            self.points = pts
            self.tree = cKDTree(pts)

    @property
    def is_cloud(self) -> bool:
        return self.polys is None

    def dist(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.tree is not None:
            return self.tree.query(X)[0]
        return np.array([min(nearest_in_polytope(P, x)[1] for P in self.polys) for x in X])

    def nearest(self, x):
        if self.tree is not None:
            return nearest_point(self.points, x)
        return nearest_point(self.polys, x)


def _sample_in_hull(H: Polytope, n: int, rng: np.random.Generator) -> np.ndarray:
    k = H.affine_dim
    if k <= 0:
        return H.vertices.copy()
    Y = (H.vertices - H.origin) @ H.basis
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    out = []
    A, b = _halfspaces_in_span(H, H.halfspaces)
    tries = 0
    while len(out) < n and tries < 200:
        cand = rng.uniform(lo, hi, size=(4 * n, k))
        ok = np.all(cand @ A.T <= b + 1e-12, axis=1)
        out.extend(cand[ok][: n - len(out)])
        tries += 1
    Yp = np.array(out).reshape(-1, k)
    return H.origin + Yp @ H.basis.T


def _second_contact_cloud(points, beta0, c1, r1, tol):
    u = (beta0 - c1) / r1
    D = beta0 - points
    num = np.einsum("ij,ij->i", D, D) - r1**2
    den = 2.0 * (r1 - D @ u)
    far = np.linalg.norm(points - c1, axis=1) > tol
    valid = far & (den > 1e-15)
    if not np.any(valid):
        return None
    s = np.full(len(points), np.inf)
    s[valid] = num[valid] / den[valid]
    s = np.maximum(s, 0.0)
    j = int(np.argmin(s))
    return s[j], points[j]


def _second_contact_polys(sd: _SetDistance, beta0, c1, r1, tol):
    u = (beta0 - c1) / r1
    others = [P for P in sd.polys if nearest_in_polytope(P, c1)[1] > 1e-9 * max(1.0, r1)]
    if not others:
        return None

    def h(s):
        x = beta0 + s * u
        return min(nearest_in_polytope(P, x)[1] for P in others) - (r1 + s)

    lo, hi = 0.0, max(r1, 1e-6)
    while h(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    x = beta0 + hi * u
    c2 = min((nearest_in_polytope(P, x) for P in others), key=lambda t: t[1])[0]
    return hi, c2


def union_convexity(S, tol: float = 1e-2, probes: int = 2000, seed=0) -> ConvexityVerdict:
    """Probe the hull of S for points farther than tol from S.

    Convex verdicts are certified only at the probe density.  A non-convex
    verdict carries a ball that touches S in two distinct points and
    contains no point of S in its interior (radius - tol).
    """
    sd = _SetDistance(S)
    H = hull(sd.points, DEFAULT_TOL, validate=False)
    if H.affine_dim <= 0:
        return ConvexityVerdict(True, None, 0, tol, 0.0, sd.is_cloud)
    rng = np.random.default_rng(seed)
    X = _sample_in_hull(H, probes, rng)
    # midpoints of vertex pairs probe thin gaps that uniform samples can miss
    V = H.vertices
    if len(V) >= 2:
        i = rng.integers(len(V), size=min(probes, 200))
        j = rng.integers(len(V), size=len(i))
        w = rng.uniform(size=(len(i), 1))
        X = np.vstack([X, w * V[i] + (1 - w) * V[j]])
    d = sd.dist(X)
    k = int(np.argmax(d))
    gap = float(d[k])
    if gap <= tol:
        return ConvexityVerdict(True, None, len(X), tol, gap, sd.is_cloud)
    beta0 = X[k]
    c1, r1 = sd.nearest(beta0)
    found = _second_contact_cloud(sd.points, beta0, c1, r1, tol) if sd.is_cloud else _second_contact_polys(sd, beta0, c1, r1, tol)
    witness = None
    if found is not None:
        s, c2 = found
        u = (beta0 - c1) / r1
        center = beta0 + s * u
        witness = Witness(center, float(r1 + s), (c1, np.asarray(c2, dtype=float)))
    return ConvexityVerdict(False, witness, len(X), tol, gap, sd.is_cloud)


def check_witness(S, w: Witness, tol: float) -> bool:
    """Both contacts on the sphere, distinct, and no point of S strictly inside."""
    sd = _SetDistance(S)
    inner = float(sd.dist(w.center)[0])
    on = [abs(np.linalg.norm(c - w.center) - w.radius) <= tol for c in w.contacts]
    in_set = [float(sd.dist(c)[0]) <= tol for c in w.contacts]
    distinct = np.linalg.norm(w.contacts[0] - w.contacts[1]) > tol
    return bool(inner >= w.radius - tol and all(on) and all(in_set) and distinct)


def hausdorff(A: np.ndarray, B: np.ndarray) -> float:
    A = np.asarray(A, dtype=float).reshape(len(A), -1)
    B = np.asarray(B, dtype=float).reshape(len(B), -1)
    return float(max(cKDTree(B).query(A)[0].max(), cKDTree(A).query(B)[0].max()))


def hausdorff_segment(poly: Polytope, a, b, n: int = 2001) -> float:
    """Hausdorff distance between a polytope and the segment [a, b] (sampled densely)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    seg = a + t * (b - a)
    d1 = max(nearest_in_polytope(poly, x)[1] for x in seg)
    d2 = max(nearest_point(seg, v)[1] for v in poly.vertices)
    return float(max(d1, d2))
