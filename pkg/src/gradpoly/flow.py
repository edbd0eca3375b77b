"""Orbit sampling, norm-square gradient flows, semistability and null cones.

All flows move along G-orbits: every step multiplies the representative
by ``exp(-eta X)`` with ``X`` in p, so iterates never leave the orbit of the
starting point.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from . import exact
from .errors import EmptyCloud, NotTorus, ParamError, ZeroVector
from .gradmap import (
    AVector,
    ProjPoint,
    chamber_rep_batch,
    chamber_rep_with_k,
    mu_P,
    mu_P_batch,
    mu_V,
    proj_point,
    shifted_model,
    xi_Z,
)
from .io import read_point_cloud
from .linalg import apply_eig, eig_herm, expm_herm
from .model import Model, group_element, sample_group, sample_k_defining_batch
from .polytope import ConvexityVerdict, Polytope, hull, intersect_chamber, nearest_point, union_convexity
from .strata import support

STATUSES = ("converged_zero", "converged_positive", "budget_exhausted")


# ---------------------------------------------------------------------------
# parameters and results

@dataclass
class FlowParams:
    eta0: float = 0.5
    shrink: float = 0.5
    grow: float = 2.0
    eta_max: float = 64.0
    tol_ss: float = 1e-5
    max_iter: int = 100_000
    restarts: int = 8
    armijo: float = 0.25
    grad_tol: float = 1e-13
    record_every: int = 1
    gauss_newton: bool = True
    trust: float = 1.0

    def validate(self) -> "FlowParams":
        if not (self.eta0 > 0 and self.tol_ss > 0 and self.eta_max > 0 and self.grad_tol > 0):
            raise ParamError("step sizes and tolerances must be positive")
        if not (0 < self.shrink < 1) or self.grow < 1:
            raise ParamError("need 0 < shrink < 1 and grow >= 1")
        if self.max_iter < 0 or self.restarts < 0:
            raise ParamError("iteration budget and restart count must be nonnegative")
        return self

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FlowResult:
    final_point: ProjPoint
    final_value: float
    iterations: int
    status: str
    trajectory: list = field(default_factory=list)
    restarts_used: int = 0

    def to_json(self) -> dict:
        v = self.final_point.rep_vector
        return {"final_value": self.final_value, "iterations": self.iterations, "status": self.status,
                "restarts_used": self.restarts_used, "final_point": [[float(z.real), float(z.imag)] for z in v]}


def _alpha_coeffs(m: Model, alpha) -> np.ndarray:
    if alpha is None:
        return np.zeros(m.dim_p)
    if isinstance(alpha, AVector):
        return m.a_coeffs(alpha.coords)
    a = np.asarray(alpha, dtype=float).ravel()
    if a.shape == (m.rank,):
        return m.a_coeffs(a)
    if a.shape == (m.dim_p,):
        return a
    raise ParamError(f"alpha has {a.size} coordinates, expected rank {m.rank} or dim p {m.dim_p}")


def _single_flow(m: Model, v: np.ndarray, A: np.ndarray, prm: FlowParams) -> FlowResult:
    res = _factored_flow([(m, 1, v)], A, prm)
    res.final_point = ProjPoint(res.final_point[0], ())
    return res


def _factored_flow(factors: list, A: np.ndarray, prm: FlowParams) -> FlowResult:
    """Descent on a product point v_1^{c_1} (x) ... (x) v_r^{c_r} kept in factored form.

    ``factors`` holds (model, multiplicity, vector) for models of one group.
    The moment map is sum c_i mu(v_i) and a step applies exp(-eta X) to every
    factor, which is exactly the tensor-product step.  Storing factors keeps
    the iterate on the Segre image even when the group element blows up.
    """
    ms = [f[0] for f in factors]
    cs = [f[1] for f in factors]
    vs = [np.asarray(f[2], dtype=complex) / np.linalg.norm(f[2]) for f in factors]

    def moment(vv):
        return sum(c * mu_P(mm, x).coeffs for mm, c, x in zip(ms, cs, vv)) - A

    X = moment(vs)
    f = float(X @ X)
    traj = [f]
    eta = prm.eta0
    it = 0
    tol2 = prm.tol_ss**2
    status = "budget_exhausted"
    while True:
        if f < tol2:
            status = "converged_zero"
            break
        Hs = [mm.p_operator(X) for mm in ms]
        slope = 0.0
        for mm, c, x in zip(ms, cs, vs):
            Z = xi_Z(mm, X, x)
            slope += 4.0 * c * float(np.real(np.vdot(Z, Z)))
        if slope <= prm.grad_tol * f:
            status = "converged_positive"
            break
        if it >= prm.max_iter:
            break
        dslope = slope
        if prm.gauss_newton:
            xi, dslope = _gn_direction(ms, cs, vs, X)
            Hs = [mm.p_operator(xi) for mm in ms]
            # trust radius on the generator so steps cannot leap to numerical infinity
            eta = min(1.0, prm.trust / max(float(np.linalg.norm(xi)), 1e-300))
            if not dslope > 0:
                Hs = [mm.p_operator(X) for mm in ms]
                dslope = slope
        Es = [eig_herm(H) for H in Hs]
        while True:
            ws = []
            with np.errstate(over="ignore", invalid="ignore"):
                for (ew, EU), x in zip(Es, vs):
                    w = apply_eig(ew, EU, x, -eta)
                    nw = np.linalg.norm(w)
                    if not (np.isfinite(nw) and nw > 1e-300):
                        break
                    ws.append(w / nw)
            # an overflowing trial step is rejected like any other
            if len(ws) == len(vs):
                X2 = moment(ws)
                f2 = float(X2 @ X2)
                if f2 <= f - prm.armijo * eta * dslope and f2 <= f:
                    break
            eta *= prm.shrink
            if eta < 1e-16:
                status = "converged_positive"
                break
        if status == "converged_positive":
            break
        it += 1
        vs, X, f = ws, X2, f2
        if it % prm.record_every == 0:
            traj.append(f)
        eta = min(eta * prm.grow, prm.eta_max)
    return FlowResult(vs, f, it, status, traj)


def _gn_direction(ms, cs, vs, X):
    """Gauss-Newton generator: least-squares solution of J xi = X.

    J = sum c_i 2 Re(C_i^* C_i) is the derivative of the moment map along
    exp(t xi), where column b of C_i is (X_b - mu_b(v_i)) v_i.  Returns xi and
    the directional decrease 2 X.J xi of f.
    """
    J = 0.0
    for mm, c, x in zip(ms, cs, vs):
        C = np.einsum("bij,j->ib", mm.p_basis, x)
        C = C - np.outer(x, mu_P(mm, x).coeffs)
        J = J + 2.0 * c * np.real(C.conj().T @ C)
    w, U = np.linalg.eigh(J)
    keep = w > 1e-10 * max(float(w.max()), 1e-300)
    xi = U[:, keep] @ ((U[:, keep].T @ X) / w[keep])
    return xi, float(2.0 * X @ (J @ xi))


def norm_square_flow(m: Model, z0, alpha=None, params: FlowParams | None = None, seed=0) -> FlowResult:
    """Minimize |mu_p - alpha|^2 along the G-orbit of z0 by descent steps exp(-eta X).

    Restarts start from k.z0 for random k in K and the best run is kept; a
    run that reaches the zero level stops the search.
    """
    prm = (params or FlowParams()).validate()
    v0 = z0.rep_vector if isinstance(z0, ProjPoint) else np.asarray(z0, dtype=complex)
    if np.linalg.norm(v0) == 0:
        raise ZeroVector("flow from the zero vector")
    A = _alpha_coeffs(m, alpha)
    best = _single_flow(m, np.asarray(v0, dtype=complex), A, prm)
    used = 0
    if best.status != "converged_zero" and prm.restarts > 0:
        rng = np.random.default_rng(seed)
        for _ in range(prm.restarts):
            try:
                k = sample_group(m, "K", 0.0, rng)
            except Exception:
                break
            used += 1
            res = _single_flow(m, k.operator @ v0, A, prm)
            if res.final_value < best.final_value:
                best = res
            if best.status == "converged_zero":
                break
    best.restarts_used = used
    best.final_point = proj_point(m, best.final_point.rep_vector)
    return best


def _shifted_flow(sm, v, A, prm: FlowParams, seed) -> FlowResult:
    """Flow of [v^q (x) w^p] in the shifted model, run on the factors (v, w)."""
    orb = sm.orbit
    w0 = orb.base_point.rep_vector
    best = _factored_flow([(sm.base, sm.q, v), (orb.orbit_model, sm.p, w0)], A, prm)
    used = 0
    if best.status != "converged_zero" and prm.restarts > 0:
        rng = np.random.default_rng(seed)
        for _ in range(prm.restarts):
            k = sample_group(sm.base, "K", 0.0, rng)
            # the same k acts on both factors
            kw = group_element(orb.orbit_model, k_coeffs=k.k_coeffs).operator @ w0
            used += 1
            res = _factored_flow([(sm.base, sm.q, k.operator @ v), (orb.orbit_model, sm.p, kw)], A, prm)
            if res.final_value < best.final_value:
                best = res
            if best.status == "converged_zero":
                break
    best.restarts_used = used
    best.final_point = proj_point(sm.model, sm.embed(*best.final_point))
    return best


# ---------------------------------------------------------------------------
# semistability

@dataclass
class SemistableVerdict:
    semistable: bool
    label: str
    final_value: float
    budget: int
    tol_ss: float
    route: str
    flow: FlowResult

    def to_json(self) -> dict:
        return {"semistable": self.semistable, "label": self.label, "final_value": self.final_value,
                "budget": self.budget, "tol_ss": self.tol_ss, "route": self.route, "flow": self.flow.to_json()}


def _label(res: FlowResult, prm: FlowParams) -> tuple[bool, str]:
    if res.final_value < prm.tol_ss**2:
        return True, "semistable"
    floor = float(np.sqrt(res.final_value))
    if res.status == "budget_exhausted":
        return False, f"inconclusive at budget {prm.max_iter}, floor {floor:.3e}"
    return False, f"not semistable at budget {prm.max_iter}, floor {floor:.3e}"


def semistable_test(m: Model, z, alpha=None, shift: tuple | None = None, params: FlowParams | None = None,
                    seed=0) -> SemistableVerdict:
    """alpha-semistability of z by flow.

    Without ``shift`` the flow targets alpha directly.  With
    ``shift = (p, q, orb)`` the point is embedded in the shifted model and
    the flow targets ``q * alpha`` there.
    """
    prm = (params or FlowParams()).validate()
    if shift is None:
        res = norm_square_flow(m, z, alpha, prm, seed)
        route = "direct"
    else:
        p, q, orb = shift
        sm = shifted_model(m, p, q, orb)
        v = z.rep_vector if isinstance(z, ProjPoint) else np.asarray(z, dtype=complex)
        res = _shifted_flow(sm, v, q * _alpha_coeffs(m, alpha), prm, seed)
        route = f"shifted p={p} q={q}"
    ok, label = _label(res, prm)
    return SemistableVerdict(ok, label, res.final_value, prm.max_iter, prm.tol_ss, route, res)


# ---------------------------------------------------------------------------
# null cone

@dataclass
class NullconeVerdict:
    verdict: str  # null | minimal_vector | inconclusive
    final_norm: float
    mu_ratio: float
    iterations: int
    tol_null: float
    tol_ss: float

    @property
    def is_null(self) -> bool:
        return self.verdict == "null"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _newton_direction(m: Model, u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """H^+ g for the Gram Hessian H_ab = 4 Re<X_a u, X_b u> of |exp(xi) u|^2 at xi = 0."""
    B = np.einsum("bij,j->ib", m.p_basis, u)
    H = 4.0 * np.real(B.conj().T @ B)
    w, U = np.linalg.eigh(H)
    keep = w > 1e-12 * max(float(w.max()), 1e-300)
    c = U[:, keep].T @ g
    return U[:, keep] @ (c / w[keep])


def nullcone_numeric(m: Model, v, tol_null: float = 1e-6, tol_ss: float = 1e-5, budget: int = 100_000,
                     eta0: float = 1.0, armijo: float = 0.1) -> NullconeVerdict:
    """Vector-space descent v <- exp(-eta xi) v on |v|^2 without renormalization.

    The start is scaled to unit norm (the null cone is a cone).  The
    direction xi in p is the gradient mu_V(v) preconditioned by the
    Hessian of |exp(xi) v|^2, so exponential tails decay geometrically even
    when 0 lies on the boundary of the support hull and the plain gradient
    is stiff.  ``minimal_vector`` is declared once |mu_V(v)| / |v|^2 drops
    below tol_ss, a scale-free version of the Kempf-Ness condition.
    """
    if not (tol_null > 0 and tol_ss > 0 and eta0 > 0 and budget >= 0):
        raise ParamError("tolerances, step and budget must be positive")
    u = np.asarray(v, dtype=complex).ravel()
    n0 = np.linalg.norm(u)
    if n0 == 0:
        raise ZeroVector("null-cone test of the zero vector")
    u = u / n0
    N = 1.0
    M = mu_V(m, u).coeffs
    it = 0
    while True:
        nrm = float(np.sqrt(N))
        ratio = float(np.linalg.norm(M)) / N
        if nrm < tol_null:
            return NullconeVerdict("null", nrm, ratio, it, tol_null, tol_ss)
        if ratio < tol_ss:
            return NullconeVerdict("minimal_vector", nrm, ratio, it, tol_null, tol_ss)
        if it >= budget:
            return NullconeVerdict("inconclusive", nrm, ratio, it, tol_null, tol_ss)
        g = 2.0 * M
        xi = _newton_direction(m, u, g)
        slope = float(g @ xi)
        if not slope > 0:
            xi, slope = g / max(N, 1e-300), float(g @ g) / max(N, 1e-300)
        H = m.p_operator(xi)
        step = eta0
        while True:
            w = expm_herm(H, -step) @ u
            Nw = float(np.real(np.vdot(w, w)))
            if Nw <= N - armijo * step * slope:
                break
            step *= 0.5
            if step < 1e-18:
                return NullconeVerdict("inconclusive", nrm, ratio, it, tol_null, tol_ss)
        it += 1
        u, N = w, Nw
        M = mu_V(m, u).coeffs


def _zero_in_hull_exact(W: Sequence[tuple], rank: int) -> bool:
    """Exact decision of 0 in conv(W), guided by an LP and certified exactly."""
    if any(all(x == 0 for x in w) for w in W):
        return True
    Wf = np.array([[float(x) for x in w] for w in W], dtype=float).reshape(len(W), rank)
    res = linprog(np.zeros(len(W)), A_eq=np.vstack([Wf.T, np.ones(len(W))]), b_eq=np.r_[np.zeros(rank), 1.0],
                  bounds=(0, None), method="highs")
    if res.status == 0:
        J = [i for i in range(len(W)) if res.x[i] > 1e-9]
        if _exact_convex_zero(W, J, rank):
            return True
    else:
        # Farkas: a direction xi with xi . w > 0 for all w certifies 0 outside
        c = np.r_[np.zeros(rank), -1.0]
        A_ub = np.hstack([-Wf, np.ones((len(W), 1))])
        r2 = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(W)), bounds=[(-1, 1)] * rank + [(None, 1)], method="highs")
        if r2.status == 0 and r2.x[-1] > 1e-9:
            xi = [Fraction(x).limit_denominator(10**6) for x in r2.x[:rank]]
            if all(exact.dot(xi, w) > 0 for w in W):
                return False
    # exhaustive exact fallback (Caratheodory)
    for k in range(1, min(len(W), rank + 1) + 1):
        for J in itertools.combinations(range(len(W)), k):
            if _exact_convex_zero(W, list(J), rank):
                return True
    return False


def _exact_convex_zero(W, J, rank) -> bool:
    if not J:
        return False
    for k in range(1, min(len(J), rank + 1) + 1):
        for sub in itertools.combinations(J, k):
            A = [tuple(W[i][r] for i in sub) for r in range(rank)] + [tuple(Fraction(1) for _ in sub)]
            b = tuple(Fraction(0) for _ in range(rank)) + (Fraction(1),)
            x = exact.solve(A, b)
            if x is not None and all(t >= 0 for t in x):
                return True
    return False


def nullcone_torus_exact(m: Model, v) -> bool:
    """v is null iff 0 is not in the convex hull of its support weights."""
    if m.kind != "torus":
        raise NotTorus(f"exact null-cone test needs a torus model, got {m.kind}")
    v = np.asarray(v, dtype=complex)
    if np.linalg.norm(v) == 0:
        raise ZeroVector("null-cone test of the zero vector")
    W = [m.weights[i] for i in support(m, v)]
    return not _zero_in_hull_exact(W, m.rank)


# ---------------------------------------------------------------------------
# sampling Y

@dataclass
class YSpec:
    kind: str  # whole_space | orbit_closure | union | cloud
    budget: int = 2000
    seed: int = 0
    point: np.ndarray | None = None
    members: tuple = ()
    path: str | None = None
    radii: tuple | None = None
    limit_T: float = 40.0
    limits: bool = True

    def __post_init__(self):
        if self.kind not in ("whole_space", "orbit_closure", "union", "cloud"):
            raise ParamError(f"unknown Y kind {self.kind!r}")
        if self.budget < 1:
            raise ParamError("sampling budget must be >= 1")
        if self.kind == "orbit_closure":
            if self.point is None:
                raise ParamError("orbit_closure needs a seed point")
            p = np.asarray(self.point.rep_vector if isinstance(self.point, ProjPoint) else self.point, dtype=complex)
            if np.linalg.norm(p) == 0:
                raise ZeroVector("orbit of the zero vector")
            self.point = p / np.linalg.norm(p)
        if self.kind == "cloud" and not self.path:
            raise ParamError("cloud Y needs a file path")

    def schedule(self) -> np.ndarray:
        if self.radii is not None:
            return np.asarray(self.radii, dtype=float)
        return np.concatenate([[0.0], np.geomspace(0.05, 20.0, 12)])


def direction_grid(m: Model, rng: np.random.Generator) -> np.ndarray:
    """2 dim(p)^2 unit directions: plus/minus each basis vector, then random ones."""
    d = m.dim_p
    n = 2 * d * d
    dirs = [s * e for e in np.eye(d) for s in (1.0, -1.0)]
    while len(dirs) < n:
        u = rng.standard_normal(d)
        dirs.append(u / np.linalg.norm(u))
    return np.array(dirs[:n]).reshape(n, d)


def _limit_probe(m: Model, xi: np.ndarray, v: np.ndarray, T: float) -> np.ndarray:
    w = expm_herm(m.p_operator(xi), T) @ v
    return w / np.linalg.norm(w)


def _k_apply(m: Model, rng, v):
    try:
        return sample_group(m, "K", 0.0, rng).operator @ v
    except Exception:
        return v


def orbit_sample(m: Model, spec: YSpec) -> np.ndarray:
    """Sample points (rows, unit vectors) of Y; deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    n = m.rep_dim
    if spec.kind == "cloud":
        X = read_point_cloud(spec.path)
        if X.shape[1] != n:
            raise ParamError(f"cloud has {X.shape[1]} complex columns, model has rep_dim {n}")
        return X / np.linalg.norm(X, axis=1, keepdims=True)
    if spec.kind == "union":
        parts = [orbit_sample(m, s) for s in spec.members]
        if not parts:
            raise EmptyCloud("union of no sets")
        return np.vstack(parts)
    out = []
    if spec.kind == "whole_space":
        Z = rng.standard_normal((spec.budget, n)) + 1j * rng.standard_normal((spec.budget, n))
        out.append(Z / np.linalg.norm(Z, axis=1, keepdims=True))
        if spec.limits and m.dim_p:
            for xi in direction_grid(m, rng):
                base = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                out.append(_limit_probe(m, xi, _k_apply(m, rng, base / np.linalg.norm(base)), spec.limit_T)[None])
        return np.vstack(out)
    # orbit closure: k exp(xi) x over the radius schedule plus limit probes
    x = spec.point
    radii = spec.schedule()
    per = np.full(len(radii), spec.budget // len(radii))
    per[: spec.budget % len(radii)] += 1
    for r, cnt in zip(radii, per):
        for _ in range(int(cnt)):
            g = sample_group(m, "G", float(r), rng)
            w = g.operator @ x
            out.append((w / np.linalg.norm(w))[None])
    if spec.limits and m.dim_p and radii.max() > 0:
        for xi in direction_grid(m, rng):
            out.append(_limit_probe(m, xi, x, spec.limit_T)[None])
            out.append(_k_apply(m, rng, _limit_probe(m, xi, _k_apply(m, rng, x), spec.limit_T))[None])
    return np.vstack(out)


# ---------------------------------------------------------------------------
# A_+(Y)

@dataclass
class APlusResult:
    points: np.ndarray  # sample points of Y used
    cloud: np.ndarray  # chamber values, ortho coordinates
    polytope: Polytope  # hull of the cloud clipped to the chamber, ortho coordinates
    verdict: ConvexityVerdict
    model: Model

    @property
    def cloud_display(self) -> np.ndarray:
        return np.array([self.model.display(y) for y in self.cloud]).reshape(len(self.cloud), -1)

    def polytope_display(self) -> Polytope:
        if self.polytope.is_empty:
            return Polytope.empty(len(self.model.display_names), self.polytope.tol)
        V = np.array([self.model.display(y) for y in self.polytope.vertices])
        return hull(V, self.polytope.tol)


def _project_to_chamber(m: Model, a: np.ndarray) -> np.ndarray:
    L = m.chamber_ortho
    if L.size == 0 or np.all(L @ a >= 0):
        return a
    cons = [{"type": "ineq", "fun": (lambda x, l=l: l @ x), "jac": (lambda x, l=l: l)} for l in L]
    res = minimize(lambda x: 0.5 * np.sum((x - a) ** 2), np.zeros_like(a), jac=lambda x: x - a,
                   constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
    return res.x


def refinement_targets(m: Model, cloud: np.ndarray, extend: float = 0.5) -> list:
    """Flow targets that pull samples to the extremes of A(Y): 0 and pushed-out hull vertices."""
    targets = [np.zeros(m.rank)]
    H = hull(cloud, 1e-9, validate=False)
    c = H.centroid()
    for v in H.vertices:
        targets.append(_project_to_chamber(m, v + extend * (v - c)))
    return targets


def compute_A_plus(m: Model, spec: YSpec, probes: int = 2000, convexity_tol: float = 1e-2,
                   refine: bool = True, refine_starts: int = 3, refine_params: FlowParams | None = None) -> APlusResult:
    """Chamber image of sampled Y, its clipped hull and a convexity verdict.

    With ``refine`` a few points of Y are additionally moved along their
    G-orbits by norm-square flows towards 0 and towards points just outside
    the sampled hull; their chamber values are added to the cloud.  This
    reaches boundary values of A_+(Y) that have measure zero under
    sampling.
    """
    X = orbit_sample(m, spec)
    C = chamber_rep_batch(m, mu_P_batch(m, X))
    if refine and len(C) and m.rank:
        prm = refine_params or FlowParams(max_iter=3000, restarts=0, tol_ss=1e-9)
        extra = []
        for t in refinement_targets(m, C):
            idx = np.argsort(np.linalg.norm(C - t, axis=1), kind="stable")[:refine_starts]
            for i in idx:
                res = norm_square_flow(m, X[i], t, prm, seed=spec.seed)
                extra.append(res.final_point.rep_vector)
        if extra:
            E = np.array(extra)
            X = np.vstack([X, E])
            C = np.vstack([C, chamber_rep_batch(m, mu_P_batch(m, E))])
    H = hull(C, 1e-9, validate=False) if m.rank else Polytope.empty(0)
    P = intersect_chamber(H, m.chamber_ortho) if m.chamber else H
    verdict = union_convexity(C, convexity_tol, probes, spec.seed)
    return APlusResult(X, C, P, verdict, m)


# ---------------------------------------------------------------------------
# fixed-direction and structural checks

@dataclass
class FixedDirectionReport:
    q0: np.ndarray
    p0: np.ndarray
    xi: np.ndarray
    n_fiber: int
    max_xi_norm: float
    fixed_tol: float
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.vacuous or self.max_xi_norm < self.fixed_tol

    def to_json(self) -> dict:
        return {"q0": self.q0.tolist(), "p0": self.p0.tolist(), "xi": self.xi.tolist(), "n_fiber": self.n_fiber,
                "max_xi_norm": self.max_xi_norm, "fixed_tol": self.fixed_tol, "vacuous": self.vacuous,
                "passed": self.passed}


def fixed_direction_check(m: Model, spec: YSpec, p0, fiber_tol: float = 1e-8, fixed_tol: float = 1e-4,
                          vacuous_tol: float = 1e-3, X: np.ndarray | None = None) -> FixedDirectionReport:
    """At the point q0 of sampled A(Y) nearest p0, xi = q0 - p0 should fix the fiber.

    Fiber points are samples whose chamber value lies within ``fiber_tol``
    of q0.  When p0 is within ``vacuous_tol`` of the cloud, xi is treated
    as zero and the check passes vacuously.
    """
    p0 = np.asarray(p0.coords if isinstance(p0, AVector) else p0, dtype=float).ravel()
    if X is None:
        X = orbit_sample(m, spec)
    if len(X) == 0:
        raise EmptyCloud("no samples of Y")
    C = mu_P_batch(m, X)
    A = chamber_rep_batch(m, C)
    q0, dist = nearest_point(A, p0)
    if dist <= vacuous_tol:
        return FixedDirectionReport(q0, p0, np.zeros_like(p0), 0, 0.0, fixed_tol, True)
    xi = q0 - p0
    idx = np.flatnonzero(np.linalg.norm(A - q0, axis=1) < fiber_tol)
    worst = 0.0
    for i in idx:
        _, k = chamber_rep_with_k(m, C[i])
        eta = m.ad(np.linalg.inv(k), m.a_coeffs(xi))
        worst = max(worst, float(np.linalg.norm(xi_Z(m, eta, X[i]))))
    return FixedDirectionReport(q0, p0, xi, len(idx), worst, fixed_tol, False)


@dataclass
class KostantReport:
    n: int
    min_gap: float
    violations: int
    threshold: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def random_chamber_vector(m: Model, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    c = rng.standard_normal(m.dim_p) * scale
    return chamber_rep_with_k(m, c)[0].coords


def kostant_check(m: Model, n: int, seed=0, threshold: float = -1e-9, batch: int = 2000) -> KostantReport:
    """|Ad(k) q - p|^2 - |q - p|^2 over random k in K and q, p in the chamber."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    bad = 0
    done = 0
    while done < n:
        N = min(batch, n - done)
        Q = chamber_rep_batch(m, rng.standard_normal((N, m.dim_p)))
        P = chamber_rep_batch(m, rng.standard_normal((N, m.dim_p)))
        Kd = sample_k_defining_batch(m, N, rng)
        Qc = np.zeros((N, m.dim_p))
        Qc[:, list(m.a_indices)] = Q
        Pc = np.zeros((N, m.dim_p))
        Pc[:, list(m.a_indices)] = P
        Xq = np.tensordot(Qc, m.p_defining, axes=(1, 0))
        kq = m.p_coeffs_batch(Kd @ Xq @ np.conj(np.transpose(Kd, (0, 2, 1))))
        gap = np.sum((kq - Pc) ** 2, axis=1) - np.sum((Q - P) ** 2, axis=1)
        worst = min(worst, float(gap.min()))
        bad += int(np.sum(gap < threshold))
        done += N
    return KostantReport(n, float(worst), bad, threshold)


@dataclass
class FlagOrbitReport:
    n: int
    max_residual: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def flag_orbit_check(m: Model, x, n: int, seed=0, radius: float = 3.0) -> FlagOrbitReport:
    """chamber_rep(mu(g.x)) against chamber_rep(mu(x)) for random g in G."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x.rep_vector if isinstance(x, ProjPoint) else x, dtype=complex)
    ref = chamber_rep_with_k(m, mu_P(m, x).coeffs)[0].coords
    worst = 0.0
    for _ in range(n):
        g = sample_group(m, "G", radius, rng)
        y = chamber_rep_with_k(m, mu_P(m, g.operator @ x).coeffs)[0].coords
        worst = max(worst, float(np.max(np.abs(y - ref))))
    return FlagOrbitReport(n, worst)


def semistable_fraction(m: Model, n: int, alpha=None, params: FlowParams | None = None, seed=0) -> dict:
    """Fraction of uniform samples of P(V) that are alpha-semistable, with inconclusive counts."""
    rng = np.random.default_rng(seed)
    counts = {"semistable": 0, "not_semistable": 0, "inconclusive": 0}
    for i in range(n):
        v = rng.standard_normal(m.rep_dim) + 1j * rng.standard_normal(m.rep_dim)
        ver = semistable_test(m, v, alpha, None, params, seed=i)
        if ver.semistable:
            counts["semistable"] += 1
        elif ver.label.startswith("inconclusive"):
            counts["inconclusive"] += 1
        else:
            counts["not_semistable"] += 1
    counts["n"] = n
    counts["fraction"] = counts["semistable"] / n
    return counts
