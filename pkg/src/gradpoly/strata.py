"""Exact orbit-type strata of the maximal torus action and the P0 decomposition.

Everything here works in the rational coordinates of ``a`` (see
:mod:`gradpoly.model`), with the exact Gram matrix ``m.a_gram`` used
wherever orthogonality enters.  Because ``A`` acts diagonally on weight
blocks, the isotropy algebra of a point of P(V) only depends on which
blocks it meets, and the image of a stratum closure is the convex hull of
the corresponding weights.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import exact
from .errors import DegenerateSpec, DimensionCap, InfeasibleFiber
from .gradmap import block_support
from .model import Model

RANK_CAP = 4


# ---------------------------------------------------------------------------
# supports and isotropy

def support(m: Model, v) -> tuple:
    """Indices of weight blocks on which ``v`` has a nonzero component."""
    return block_support(m, np.asarray(v, dtype=complex))


def _weight_functionals(m: Model, idx: Sequence[int]) -> list:
    w0 = m.weights[idx[0]]
    return [exact.matvec(m.a_gram, exact.sub(m.weights[i], w0)) for i in idx[1:]]


def isotropy_a(m: Model, supp: Sequence[int]) -> tuple:
    """Rational basis of {xi in a : (chi_i - chi_j)(xi) = 0 for i, j in supp}."""
    supp = sorted(set(supp))
    if not supp:
        raise ValueError("support must be nonempty")
    rows = [r for r in _weight_functionals(m, supp) if any(x != 0 for x in r)]
    return exact.canonical_basis(exact.nullspace(rows, m.rank), m.rank)


@dataclass(frozen=True)
class StratumType:
    """One class of strata, keyed by the affine span of its image.

    ``support_class`` lists every weight block lying on that span, i.e. the
    largest support in the class; ``affine_span`` is a canonical point and a
    canonical direction basis.
    """

    support_class: tuple
    isotropy: tuple
    codim: int
    affine_point: tuple
    affine_directions: tuple

    @property
    def affine_span(self) -> tuple:
        return self.affine_point, self.affine_directions

    @property
    def is_open(self) -> bool:
        return self.codim == 0

    def key(self) -> tuple:
        return self.affine_point, self.affine_directions


def _flat(m: Model, idx: Sequence[int]) -> tuple:
    """Canonical (point, directions) of the affine span of weights idx."""
    w0 = m.weights[idx[0]]
    dirs = exact.canonical_basis([exact.sub(m.weights[i], w0) for i in idx[1:]], m.rank)
    return exact.affine_reduce(w0, dirs, m.rank), dirs


def _on_flat(m: Model, point, dirs, w) -> bool:
    return exact.affine_reduce(w, dirs, m.rank) == point


def _make_stratum(m: Model, point, dirs) -> StratumType:
    members = tuple(i for i, w in enumerate(m.weights) if _on_flat(m, point, dirs, w))
    iso = isotropy_a(m, members)
    return StratumType(members, iso, len(iso), point, dirs)


def enumerate_strata(m: Model) -> list:
    """All stratum classes, generated by closing weight flats under joins.

    The classes are the distinct affine spans of subsets of weights; they
    are produced breadth-first from single weights, so every class is
    reached without visiting all 2^N supports.
    """
    n = len(m.weights)
    seen: dict = {}
    frontier = []
    for i in range(n):
        key = _flat(m, [i])
        if key not in seen:
            seen[key] = _make_stratum(m, *key)
            frontier.append(key)
    while frontier:
        nxt = []
        for point, dirs in frontier:
            members = seen[(point, dirs)].support_class
            for j in range(n):
                if j in members:
                    continue
                key = _flat(m, list(members) + [j])
                if key not in seen:
                    seen[key] = _make_stratum(m, *key)
                    nxt.append(key)
        frontier = nxt
    return sorted(seen.values(), key=lambda s: (-s.codim, s.support_class))


def stratum_of_support(m: Model, supp: Sequence[int], strata: Sequence[StratumType] | None = None) -> StratumType:
    key = _flat(m, sorted(set(supp)))
    for s in strata if strata is not None else enumerate_strata(m):
        if s.key() == key:
            return s
    return _make_stratum(m, *key)


def fixed_point_images(m: Model) -> list:
    """Weights (rational coordinates): the images of the A-fixed lines."""
    return list(m.weights)


def isotropy_generation_check(m: Model) -> list:
    """Classes whose isotropy is not the sum of the one-dimensional isotropies above them.

    Returns the offending classes (empty list when the property holds).
    """
    strata = enumerate_strata(m)
    ones = [s for s in strata if s.codim == 1]
    bad = []
    for s in strata:
        if s.codim == 0:
            continue
        above = [o for o in ones if set(s.support_class) <= set(o.support_class)]
        gens = [b for o in above for b in o.isotropy]
        if exact.canonical_basis(gens, m.rank) != exact.canonical_basis(list(s.isotropy), m.rank):
            bad.append(s)
    return bad


# ---------------------------------------------------------------------------
# exact polytopes

@dataclass(frozen=True)
class ExactPolytope:
    """Full-dimensional rational polytope {x : a.x <= b} with its vertices."""

    vertices: tuple
    facets: tuple  # ((a, b), ...)

    def to_float(self, tol: float = 1e-9):
        from .polytope import Polytope
        V = np.array([[float(t) for t in v] for v in self.vertices], dtype=float)
        H = [(np.array([float(t) for t in a]), float(b)) for a, b in self.facets]
        return Polytope.from_data(V, H, [], tol)

    def contains(self, x) -> bool:
        return all(exact.dot(a, x) <= b for a, b in self.facets)


def _vertices_of(cons: Sequence[tuple], dim: int) -> list:
    """Exact vertex enumeration of {a.x <= b} by brute force over dim-subsets."""
    verts = set()
    for sub in itertools.combinations(range(len(cons)), dim):
        A = [cons[i][0] for i in sub]
        if exact.rank(A, dim) < dim:
            continue
        x = exact.solve(A, [cons[i][1] for i in sub])
        if x is None:
            continue
        if all(exact.dot(a, x) <= b for a, b in cons):
            verts.add(x)
    return sorted(verts)


def _normalize_halfspace(a, b):
    """Scale so the first nonzero coefficient has absolute value 1."""
    piv = next(x for x in a if x != 0)
    s = abs(piv)
    return tuple(x / s for x in a), b / s


def _prune(cons: Sequence[tuple], verts: Sequence, dim: int) -> list:
    """Keep only facet-defining constraints (tight on an affinely (dim-1)-dimensional vertex set)."""
    out = []
    for a, b in cons:
        tight = [v for v in verts if exact.dot(a, v) == b]
        if not tight:
            continue
        diffs = [exact.sub(v, tight[0]) for v in tight[1:]]
        if (exact.rank(diffs, dim) if diffs else 0) == dim - 1:
            h = _normalize_halfspace(a, b)
            if h not in out:
                out.append(h)
    return out


def hull_exact(points: Sequence, dim: int) -> ExactPolytope:
    """Exact H- and V-representation of a full-dimensional rational hull."""
    pts = sorted(set(tuple(p) for p in points))
    diffs = [exact.sub(p, pts[0]) for p in pts[1:]]
    if (exact.rank(diffs, dim) if diffs else 0) < dim:
        raise DegenerateSpec("weights do not span a full-dimensional polytope (action not effective on a)")
    cons = []
    for sub in itertools.combinations(range(len(pts)), dim):
        base = pts[sub[0]]
        diffs = [exact.sub(pts[i], base) for i in sub[1:]]
        ns = exact.nullspace(diffs, dim) if diffs else exact.nullspace([], dim)
        if len(ns) != 1:
            continue
        a = ns[0]
        b = exact.dot(a, base)
        vals = [exact.dot(a, p) - b for p in pts]
        if all(v <= 0 for v in vals):
            cons.append(_normalize_halfspace(a, b))
        elif all(v >= 0 for v in vals):
            cons.append(_normalize_halfspace(tuple(-x for x in a), -b))
    cons = sorted(set(cons))
    verts = [p for p in pts if _is_vertex(p, cons, dim)]
    return ExactPolytope(tuple(verts), tuple(_prune(cons, verts, dim)))


def _is_vertex(p, cons, dim) -> bool:
    tight = [a for a, b in cons if exact.dot(a, p) == b]
    return bool(tight) and exact.rank(tight, dim) == dim


# ---------------------------------------------------------------------------
# decomposition of P

@dataclass(frozen=True)
class Face:
    vertices: tuple  # sorted exact vertices
    chamber: int
    equalities: tuple  # indices of chamber facets tight on the face

    @property
    def dim(self) -> int:
        if len(self.vertices) <= 1:
            return 0
        return exact.rank([exact.sub(v, self.vertices[0]) for v in self.vertices[1:]], len(self.vertices[0]))

    def directions(self) -> tuple:
        d = len(self.vertices[0])
        return exact.canonical_basis([exact.sub(v, self.vertices[0]) for v in self.vertices[1:]], d)


@dataclass(frozen=True)
class Decomposition:
    P: ExactPolytope
    sigma1: tuple  # StratumType with codim 1
    hyperplanes: tuple  # (a, b) per sigma1 element
    chambers: tuple  # ExactPolytope per component closure of P0
    faces: tuple  # Face, deduplicated by vertex set
    rank: int

    def to_json(self) -> dict:
        q = lambda x: [x.numerator, x.denominator]  # noqa: E731
        vec = lambda v: [q(t) for t in v]  # noqa: E731
        poly = lambda p: {"vertices": [vec(v) for v in p.vertices],  # noqa: E731
                          "halfspaces": [{"normal": vec(a), "offset": q(b)} for a, b in p.facets]}
        return {
            "rank": self.rank,
            "P": poly(self.P),
            "sigma1": [{"point": vec(s.affine_point), "directions": [vec(d) for d in s.affine_directions],
                        "support": list(s.support_class)} for s in self.sigma1],
            "chambers": [poly(c) for c in self.chambers],
            "faces": [{"vertices": [vec(v) for v in f.vertices], "dim": f.dim} for f in self.faces],
        }


def _hyperplane(m: Model, s: StratumType) -> tuple:
    ns = exact.nullspace(list(s.affine_directions), m.rank) if s.affine_directions else exact.nullspace([], m.rank)
    a = ns[0]
    return _normalize_halfspace(a, exact.dot(a, s.affine_point))


def _split(cell: list, h: tuple, dim: int) -> list:
    verts = _vertices_of(cell, dim)
    a, b = h
    vals = [exact.dot(a, v) - b for v in verts]
    if not (any(x > 0 for x in vals) and any(x < 0 for x in vals)):
        return [cell]
    out = []
    for sgn in (1, -1):
        c = cell + [(tuple(sgn * x for x in a), sgn * b)]
        out.append(_prune(c, _vertices_of(c, dim), dim))
    return out


def _faces_of(poly: ExactPolytope, ci: int, dim: int) -> list:
    tight = [frozenset(v for v in poly.vertices if exact.dot(a, v) == b) for a, b in poly.facets]
    family = {frozenset(poly.vertices): ()}
    frontier = [(frozenset(poly.vertices), ())]
    while frontier:
        nxt = []
        for vs, eqs in frontier:
            for j, t in enumerate(tight):
                if j in eqs:
                    continue
                w = vs & t
                if w and w not in family:
                    family[w] = tuple(sorted(eqs + (j,)))
                    nxt.append((w, family[w]))
        frontier = nxt
    return [Face(tuple(sorted(vs)), ci, eqs) for vs, eqs in family.items()]


def decompose_P0(m: Model) -> Decomposition:
    """P = conv(weights), the codim-one spans, the chambers of P0 and their faces."""
    r = m.rank
    if r > RANK_CAP:
        raise DimensionCap(f"exact decomposition supports rank <= {RANK_CAP}, got {r}")
    if r == 0:
        raise DegenerateSpec("rank zero")
    P = hull_exact(m.weights, r)
    strata = enumerate_strata(m)
    sigma1 = tuple(s for s in strata if s.codim == 1)
    hyps = tuple(_hyperplane(m, s) for s in sigma1)
    cells = [list(P.facets)]
    for h in hyps:
        cells = [c2 for c in cells for c2 in _split(c, h, r)]
    chambers = []
    for c in cells:
        verts = _vertices_of(c, r)
        chambers.append(ExactPolytope(tuple(verts), tuple(_prune(c, verts, r))))
    chambers.sort(key=lambda p: p.vertices)
    faces: dict = {}
    for ci, ch in enumerate(chambers):
        for f in _faces_of(ch, ci, r):
            faces.setdefault(f.vertices, f)
    face_list = sorted(faces.values(), key=lambda f: (-f.dim, f.vertices))
    return Decomposition(P, sigma1, hyps, tuple(chambers), tuple(face_list), r)


def face_halfspaces(d: Decomposition, f: Face) -> list:
    """Inequality description of a face (equalities as opposite pairs)."""
    ch = d.chambers[f.chamber]
    cons = list(ch.facets)
    for j in f.equalities:
        a, b = ch.facets[j]
        cons.append((tuple(-x for x in a), -b))
    return cons


def intersection_closure_violations(d: Decomposition) -> list:
    """Pairs of faces whose intersection is nonempty and not in the family.

    Intersections are recomputed from the H-descriptions by brute-force
    exact vertex enumeration, independently of how the family was built.
    """
    keys = {f.vertices for f in d.faces}
    bad = []
    for f, g in itertools.combinations(d.faces, 2):
        cons = face_halfspaces(d, f) + face_halfspaces(d, g)
        vs = tuple(_vertices_of(cons, d.rank))
        if vs and vs not in keys:
            bad.append((f, g))
    return bad


def codim1_face_violations(d: Decomposition) -> list:
    """Chamber facets not contained in a sigma1 hyperplane or a facet hyperplane of P."""
    planes = set(d.hyperplanes) | set(d.P.facets)
    planes |= {(tuple(-x for x in a), -b) for a, b in planes}
    return [(i, h) for i, ch in enumerate(d.chambers) for h in ch.facets if h not in planes]


# ---------------------------------------------------------------------------
# face isotropy

@dataclass
class FaceIsotropyReport:
    n_samples: int
    violations: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, "n_violations": len(self.violations),
                "violations": [{"face": [[str(t) for t in v] for v in f.vertices], "q": [str(t) for t in q],
                                "support": list(s)} for f, q, s in self.violations]}


def a_F(m: Model, f: Face) -> tuple:
    """Q-orthogonal complement of the face directions."""
    dirs = list(f.directions())
    return exact.canonical_basis(exact.orth_complement(dirs, m.a_gram, m.rank), m.rank)


def fiber_masses(m: Model, q, rng: np.random.Generator, n_obj: int = 4) -> np.ndarray:
    """A mass vector t >= 0, sum t = 1, sum t_i w_i = q, near the relative interior."""
    W = np.array([[float(t) for t in w] for w in m.weights], dtype=float).reshape(len(m.weights), m.rank)
    A = np.vstack([W.T, np.ones(len(W))])
    b = np.concatenate([[float(t) for t in q], [1.0]])
    sols = []
    for _ in range(n_obj):
        res = linprog(rng.standard_normal(len(W)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if res.status == 0:
            sols.append(res.x)
    if not sols:
        raise InfeasibleFiber(f"no mass vector for q = {[str(t) for t in q]}")
    lam = rng.dirichlet(np.ones(len(sols)))
    return np.clip(np.sum([l * s for l, s in zip(lam, sols)], axis=0), 0.0, None)


def fiber_point(m: Model, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A vector whose block masses are t (random phases and in-block directions)."""
    v = np.zeros(m.rep_dim, dtype=complex)
    for ti, U in zip(t, m.blocks):
        if ti <= 0:
            continue
        c = rng.standard_normal(U.shape[1]) + 1j * rng.standard_normal(U.shape[1])
        v += np.sqrt(ti) * (U @ (c / np.linalg.norm(c)))
    return v


def face_isotropy_check(m: Model, d: Decomposition, samples: int, seed=0, mass_tol: float = 1e-9) -> FaceIsotropyReport:
    """Sample (F, q, y) with q in relint F and mu_a(y) = q; check isotropy(y) within a_F."""
    rng = np.random.default_rng(seed)
    rep = FaceIsotropyReport(samples)
    for i in range(samples):
        f = d.faces[i % len(d.faces)] if i < len(d.faces) else d.faces[int(rng.integers(len(d.faces)))]
        c = [Fraction(int(x)) for x in rng.integers(1, 20, len(f.vertices))]
        tot = sum(c)
        q = tuple(sum((ci / tot * v[k] for ci, v in zip(c, f.vertices)), Fraction(0)) for k in range(m.rank))
        t = fiber_masses(m, q, rng)
        supp = tuple(j for j, tj in enumerate(t) if tj > mass_tol)
        # exact check that q lies in the affine span of the support weights
        pts = [m.weights[j] for j in supp]
        A = exact.transpose([w + (Fraction(1),) for w in pts])
        if exact.solve(A, tuple(q) + (Fraction(1),)) is None:
            raise InfeasibleFiber("support of the sampled mass vector does not reach q")
        y = fiber_point(m, t, rng)
        s_y = support(m, y)
        iso = isotropy_a(m, s_y)
        target = a_F(m, f)
        ok = exact.subspace_le(list(iso), list(target), m.rank)
        rep.samples.append((f, q, s_y))
        if not ok:
            rep.violations.append((f, q, s_y))
    return rep
