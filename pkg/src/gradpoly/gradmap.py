"""Gradient maps on V and P(V), chamber representatives, induced fields and shifting.

Conventions: for a unit vector ``v`` the tangent space of P(V) at ``[v]`` is
identified with horizontal vectors ``eta`` (``Re <eta, v> = 0`` and
``Im <eta, v> = 0``) and carries the metric ``g(a, b) = 2 Re <a, b>``.
With this metric the gradient of ``mu^xi([v]) = <xi v, v> / |v|^2`` is
exactly the induced field ``xi_Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionOverflow, RealizationMismatch, UnsupportedKind, ZeroVector
from .model import Model, build_model, same_group, tensor_models

SUPPORT_REL_TOL = 1e-11
CHAMBER_TOL = 1e-10


# ---------------------------------------------------------------------------
# value types

@dataclass(frozen=True, eq=False)
class PElement:
    model: Model
    coeffs: np.ndarray

    def operator(self, defining: bool = False) -> np.ndarray:
        return self.model.p_operator(self.coeffs, defining=defining)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @property
    def a_part(self) -> "AVector":
        return AVector(self.model, np.asarray(self.coeffs)[list(self.model.a_indices)])


@dataclass(frozen=True, eq=False)
class AVector:
    model: Model
    coords: np.ndarray

    @property
    def chamber_flag(self) -> bool:
        return self.model.in_chamber(self.coords, CHAMBER_TOL)

    def display(self) -> np.ndarray:
        return self.model.display(self.coords)

    def to_p(self) -> PElement:
        return PElement(self.model, self.model.a_coeffs(self.coords))

    @classmethod
    def from_display(cls, m: Model, d) -> "AVector":
        D = np.array([[float(t) for t in row] for row in m.a_display], dtype=float)
        x, *_ = np.linalg.lstsq(D, np.asarray(d, dtype=float), rcond=None)
        return cls(m, m.rational_to_ortho(x))

    @classmethod
    def from_rational(cls, m: Model, x) -> "AVector":
        return cls(m, m.rational_to_ortho(x))


@dataclass(frozen=True, eq=False)
class ProjPoint:
    """A line in V, stored by a unit representative."""

    rep_vector: np.ndarray
    block_supports: tuple = ()

    @property
    def v(self) -> np.ndarray:
        return self.rep_vector


def proj_point(m: Model | None, v) -> ProjPoint:
    v = np.asarray(v, dtype=complex).ravel()
    nrm = float(np.linalg.norm(v))
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ZeroVector("zero vector has no line")
    u = v / nrm
    supp = block_support(m, u) if m is not None else ()
    return ProjPoint(u, supp)


def block_support(m: Model, v: np.ndarray) -> tuple:
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ZeroVector("support of the zero vector")
    return tuple(i for i, U in enumerate(m.blocks) if np.linalg.norm(U.conj().T @ v) > SUPPORT_REL_TOL * nrm)


def random_proj_point(m: Model, rng: np.random.Generator, real: bool = False) -> ProjPoint:
    if real:
        v = rng.standard_normal(m.rep_dim).astype(complex)
    else:
        v = rng.standard_normal(m.rep_dim) + 1j * rng.standard_normal(m.rep_dim)
    return proj_point(m, v)


# ---------------------------------------------------------------------------
# gradient maps

def mu_V(m: Model, v) -> PElement:
    """Coefficients <rho(xi_b) v, v> over the p basis."""
    v = np.asarray(v, dtype=complex)
    c = np.real(np.einsum("i,bij,j->b", v.conj(), m.p_basis, v))
    return PElement(m, c)


def mu_P(m: Model, z) -> PElement:
    v = z.rep_vector if isinstance(z, ProjPoint) else np.asarray(z, dtype=complex)
    nrm2 = float(np.real(np.vdot(v, v)))
    if nrm2 == 0.0:
        raise ZeroVector("mu_P of the zero vector")
    out = mu_V(m, v)
    return PElement(m, out.coeffs / nrm2)


def mu_P_batch(m: Model, V: np.ndarray) -> np.ndarray:
    """mu_P coefficients for each row of V (shape N x rep_dim)."""
    V = np.asarray(V, dtype=complex)
    nrm2 = np.real(np.einsum("ni,ni->n", V.conj(), V))
    c = np.real(np.einsum("ni,bij,nj->nb", V.conj(), m.p_basis, V))
    return c / nrm2[:, None]


def mu_a(m: Model, z) -> AVector:
    return mu_P(m, z).a_part


def xi_Z(m: Model, xi, z) -> np.ndarray:
    """Horizontal part of rho(xi) v at the unit representative v."""
    coeffs = xi.coeffs if isinstance(xi, PElement) else np.asarray(xi, dtype=float)
    v = z.rep_vector if isinstance(z, ProjPoint) else np.asarray(z, dtype=complex) / np.linalg.norm(z)
    w = m.p_operator(coeffs) @ v
    return w - np.vdot(v, w) * v


def metric(a: np.ndarray, b: np.ndarray) -> float:
    return float(2.0 * np.real(np.vdot(b, a)))


# ---------------------------------------------------------------------------
# chamber representatives

def chamber_rep_with_k(m: Model, x) -> tuple[AVector, np.ndarray]:
    """Chamber representative of a p element and an aligning k.

    ``k`` is in the defining realization with ``Ad(k) x`` equal to the
    representative.
    """
    coeffs = x.coeffs if isinstance(x, PElement) else np.asarray(x, dtype=float)
    if m.kind == "torus":
        d = m.p_defining.shape[1]
        return AVector(m, coeffs[list(m.a_indices)].copy()), np.eye(d, dtype=complex)
    if m.kind == "product":
        ys, ks = [], []
        for f, (a, b) in zip(m.factors, m.p_slices):
            y, k = chamber_rep_with_k(f, coeffs[a:b])
            ys.append(y.coords)
            ks.append(k)
        return AVector(m, np.concatenate(ys)), scipy.linalg.block_diag(*ks)
    X = m.p_operator(coeffs, defining=True)
    if m.kind == "sl_n_real":
        S = np.real(X)
        S = 0.5 * (S + S.T)
        w, O = np.linalg.eigh(S)
        order = np.argsort(-w, kind="stable")
        w, O = w[order], O[:, order]
        if np.linalg.det(O) < 0:
            O[:, -1] = -O[:, -1]
        rep = np.diag(w).astype(complex)
        k = O.T.astype(complex)
    elif m.kind == "su_p_q":
        p = int(m.spec["params"]["p"])
        q = int(m.spec["params"]["q"])
        B = X[:p, p:]
        U, s, Wh = np.linalg.svd(B)
        W = Wh.conj().T
        r = min(p, q)
        kd = np.linalg.det(U).conj() * np.linalg.det(W).conj()
        phase = np.exp(1j * np.angle(kd) / 2.0)
        U = U.copy()
        W = W.copy()
        U[:, 0] *= phase
        W[:, 0] *= phase
        rep = np.zeros_like(X)
        for i in range(r):
            rep[i, p + i] = rep[p + i, i] = s[i]
        k = scipy.linalg.block_diag(U.conj().T, W.conj().T)
    elif m.kind == "custom":
        y = coeffs[list(m.a_indices)].copy()
        if m.dim_p == m.rank and m.in_chamber(y, CHAMBER_TOL):
            return AVector(m, y), np.eye(m.p_defining.shape[1], dtype=complex)
        raise UnsupportedKind("no chamber representative strategy for this custom model")
    else:
        raise UnsupportedKind(f"no chamber strategy for kind {m.kind!r}")
    c = m.p_coeffs(rep)
    return AVector(m, c[list(m.a_indices)]), k


def chamber_rep(m: Model, x) -> AVector:
    return chamber_rep_with_k(m, x)[0]


def chamber_rep_batch(m: Model, C: np.ndarray) -> np.ndarray:
    """Chamber representatives (ortho coords) for rows of p coefficients."""
    C = np.asarray(C, dtype=float)
    if m.kind == "torus":
        return C[:, list(m.a_indices)].copy()
    if m.kind == "sl_n_real":
        X = np.real(np.tensordot(C, m.p_defining, axes=(1, 0)))
        w = np.linalg.eigvalsh(X)[:, ::-1]
        return _diag_to_ortho(m, w)
    if m.kind == "su_p_q":
        p = int(m.spec["params"]["p"])
        X = np.tensordot(C, m.p_defining, axes=(1, 0))
        s = np.linalg.svd(X[:, :p, p:], compute_uv=False)
        # t-coordinates coincide with ortho coordinates up to the fixed T
        return (m.a_to_ortho @ s.T).T
    if m.kind == "product":
        return np.hstack([chamber_rep_batch(f, C[:, a:b]) for f, (a, b) in zip(m.factors, m.p_slices)])
    return np.array([chamber_rep(m, c).coords for c in C]).reshape(len(C), m.rank)


def _diag_to_ortho(m: Model, W: np.ndarray) -> np.ndarray:
    D = np.array([[float(t) for t in row] for row in m.a_display], dtype=float)
    X, *_ = np.linalg.lstsq(D, W.T, rcond=None)
    return (m.a_to_ortho @ X).T


# ---------------------------------------------------------------------------
# consistency of the gradient identity

@dataclass
class GradReport:
    n_samples: int
    max_gradient_residual: float
    max_kernel_residual: float
    n_kernel_samples: int
    step: float

    @property
    def max_residual(self) -> float:
        return max(self.max_gradient_residual, self.max_kernel_residual)

    def to_json(self) -> dict:
        return dict(n_samples=self.n_samples, max_gradient_residual=self.max_gradient_residual,
                    max_kernel_residual=self.max_kernel_residual, n_kernel_samples=self.n_kernel_samples,
                    step=self.step, max_residual=self.max_residual)


def _curve(v: np.ndarray, eta: np.ndarray, t: float) -> np.ndarray:
    w = v + t * eta
    return w / np.linalg.norm(w)


def _realify(vs: list) -> np.ndarray:
    return np.array([np.concatenate([x.real, x.imag]) for x in vs]).reshape(len(vs), -1)


def _horizontal_complement(m: Model, v: np.ndarray) -> np.ndarray:
    """Real orthonormal basis (rows, realified) of horizontal vectors g-orthogonal to p.z."""
    n = len(v)
    span = [v, 1j * v] + [xi_Z(m, e, v) for e in np.eye(m.dim_p)]
    A = _realify(span)
    u, s, vt = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    return vt[r:] if r < 2 * n else np.zeros((0, 2 * n))


def grad_consistency(m: Model, n_samples: int, seed, h: float = 1e-5) -> GradReport:
    """Finite-difference check of d mu^xi = g(xi_Z, .) and of the kernel of d mu."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = m.rep_dim
    worst_g = 0.0
    worst_k = 0.0
    nk = 0
    for _ in range(n_samples):
        v = random_proj_point(m, rng).rep_vector
        xi = rng.standard_normal(m.dim_p)
        xi /= np.linalg.norm(xi)
        eta = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        eta -= np.vdot(v, eta) * v
        eta /= np.linalg.norm(eta)
        f = lambda t: float(mu_P(m, _curve(v, eta, t)).coeffs @ xi)  # noqa: E731
        fd = (f(h) - f(-h)) / (2 * h)
        worst_g = max(worst_g, abs(fd - metric(xi_Z(m, xi, v), eta)))
        B = _horizontal_complement(m, v)
        if len(B):
            c = B.T @ rng.standard_normal(len(B))
            c /= np.linalg.norm(c)
            eta_k = c[:n] + 1j * c[n:]
            d = (mu_P(m, _curve(v, eta_k, h)).coeffs - mu_P(m, _curve(v, eta_k, -h)).coeffs) / (2 * h)
            worst_k = max(worst_k, float(np.max(np.abs(d))))
            nk += 1
    return GradReport(n_samples, worst_g, worst_k, nk, h)


# ---------------------------------------------------------------------------
# shifting

@dataclass(frozen=True, eq=False)
class OrbitRealization:
    """A closed orbit K.[w0] in some P(W) realizing the direction ``target_value``.

    With ``sign = -1`` (dual convention) the orbit factor contributes
    ``-xi`` to the shifted map, where ``xi`` ranges over the K-orbit of the
    target.
    """

    orbit_model: Model
    base_point: ProjPoint
    target_value: AVector
    sign: int = -1

    def residual(self) -> float:
        mu = mu_P(self.orbit_model, self.base_point).coeffs * self.sign
        rep = chamber_rep(self.orbit_model, mu)
        return float(np.max(np.abs(rep.coords - np.asarray(self.target_value.coords, dtype=float)))) if rep.coords.size else 0.0

    def check(self, tol: float = 1e-8) -> None:
        if self.sign not in (1, -1):
            raise RealizationMismatch("sign convention must be +1 or -1")
        res = self.residual()
        if not res <= tol:
            raise RealizationMismatch(f"orbit base point does not realize the target (residual {res:.3e})")


def dual_standard_orbit(m: Model) -> OrbitRealization:
    """Dual of the defining representation at the first basis line.

    For ``sl_n_real`` this realizes the highest weight of the standard
    representation (for SL(2) the direction a = 1/2).
    """
    if m.kind != "sl_n_real":
        raise UnsupportedKind("dual standard orbit realization is available for sl_n_real models")
    std = build_model({"kind": m.kind, "params": m.spec["params"], "functors": ["dual"]})
    e0 = np.zeros(std.rep_dim, dtype=complex)
    e0[0] = 1.0
    base = proj_point(std, e0)
    target = chamber_rep(std, -mu_P(std, base).coeffs)
    return OrbitRealization(std, base, AVector(std, target.coords), -1)


@dataclass(frozen=True, eq=False)
class ShiftedModel:
    model: Model
    base: Model
    orbit: OrbitRealization
    p: int
    q: int

    @property
    def beta(self) -> np.ndarray:
        """Shift direction (p/q) * target in ortho coordinates of the base model."""
        return (self.p / self.q) * np.asarray(self.orbit.target_value.coords, dtype=float)

    def embed(self, v, w) -> np.ndarray:
        """v^{(x)q} (x) w^{(x)p}, normalized."""
        v = np.asarray(v.rep_vector if isinstance(v, ProjPoint) else v, dtype=complex)
        w = np.asarray(w.rep_vector if isinstance(w, ProjPoint) else w, dtype=complex)
        out = np.ones(1, dtype=complex)
        for _ in range(self.q):
            out = np.kron(out, v)
        for _ in range(self.p):
            out = np.kron(out, w)
        return out / np.linalg.norm(out)

    def expected(self, v, w) -> np.ndarray:
        """q mu(v) + sign * p * (-mu_orb(w)) ... i.e. q mu(v) - p xi(w)."""
        mv = mu_P(self.base, v).coeffs
        xi = self.orbit.sign * mu_P(self.orbit.orbit_model, w).coeffs
        return self.q * mv - self.p * xi


def shifted_model(m: Model, p: int, q: int, orb: OrbitRealization, dim_cap: int | None = None) -> ShiftedModel:
    """Tensor model of q copies of ``m`` and p copies of the orbit model."""
    if not (isinstance(p, int) and isinstance(q, int)) or q < 1 or p < 0:
        raise ValueError("need integers p >= 0 and q >= 1")
    if math.gcd(p, q) != 1:
        raise ValueError(f"gcd({p}, {q}) != 1")
    orb.check()
    if not same_group(m, orb.orbit_model):
        raise RealizationMismatch("orbit model acts through a different group")
    cap = dim_cap or m.dim_cap
    dim = m.rep_dim**q * orb.orbit_model.rep_dim**p
    if dim > cap:
        raise DimensionOverflow(f"shifted model dimension {dim} > {cap}")
    big = tensor_models([m] * q + [orb.orbit_model] * p, dim_cap=cap)
    return ShiftedModel(big, m, orb, p, q)


def segre_residual(m1: Model, m2: Model, v, w) -> float:
    """|mu([v (x) w]) - mu([v]) - mu([w])| for two models of one group."""
    big = tensor_models([m1, m2])
    x = np.kron(np.asarray(v, dtype=complex), np.asarray(w, dtype=complex))
    lhs = mu_P(big, x).coeffs
    rhs = mu_P(m1, v).coeffs + mu_P(m2, w).coeffs
    return float(np.max(np.abs(lhs - rhs)))
