"""Unitary representations together with compatible real-form data.

A :class:`Model` packages everything the rest of the package needs about a
real reductive group ``G = K exp(p)`` acting linearly on ``V``:

* orthonormal bases of ``p`` (Hermitian) and ``k`` (skew-Hermitian), both in
  the *defining* matrix realization, where the invariant inner product
  ``scale * Re tr(X Y*)`` lives, and through the representation on ``V``;
* a maximal abelian ``a`` spanned by the first ``rank`` elements of the
  ``p`` basis;
* an exact rational basis of ``a`` (``R_1, ..., R_r``) with its Gram matrix,
  so that weights and chamber inequalities are exact rationals;
* the weight-space decomposition of ``V`` under ``a``.

Coordinates on ``a`` come in three flavours:

``ortho``     coefficients in the orthonormal ``a`` sub-basis (what
              :class:`~gradpoly.gradmap.AVector` stores);
``rational``  coefficients in the rational basis ``R`` (exact weights);
``display``   human-facing coordinates, e.g. the diagonal entries of an
              element of ``a`` for ``sl_n``.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import special_ortho_group, unitary_group

from . import exact
from .errors import (
    DegenerateSpec,
    DimensionOverflow,
    NonCommutative,
    NonCompatible,
    UnsupportedKind,
)
from .linalg import combine, expm_herm, expm_skew, herm_residual, skew_residual

KINDS = ("torus", "sl_n_real", "su_p_q", "product", "custom")
DIM_CAP = 2000
_TENSOR_ARRAY_CAP = 2**16

TOL_ENTRY = 1e-12
TOL_GRAM = 1e-10
TOL_BLOCK = 1e-10
TOL_CLOSURE = 1e-10


# ---------------------------------------------------------------------------
# functors

@dataclass(frozen=True)
class RepFunctor:
    """One step of a representation functor chain.

    ``tag`` is one of ``standard``, ``dual``, ``sym``, ``ext``, ``tensor``;
    ``degree`` is the power for ``sym``/``ext``; ``other`` is the model spec
    (a dict) to tensor with, ``None`` meaning the current representation.
    """

    tag: str
    degree: int = 1
    other: Any = None

    def __post_init__(self):
        if self.tag not in ("standard", "dual", "sym", "ext", "tensor"):
            raise DegenerateSpec(f"unknown functor {self.tag!r}")
        if not isinstance(self.degree, int) or self.degree < 1:
            raise DegenerateSpec(f"functor degree must be a positive integer, got {self.degree!r}")

    @classmethod
    def parse(cls, obj) -> "RepFunctor":
        if isinstance(obj, RepFunctor):
            return obj
        if isinstance(obj, str):
            tag, _, deg = obj.partition(":")
            return cls(tag.strip(), int(deg) if deg else 1)
        if isinstance(obj, dict):
            return cls(obj["tag"], int(obj.get("k", obj.get("degree", 1))), obj.get("with"))
        raise DegenerateSpec(f"cannot parse functor {obj!r}")

    def to_json(self):
        if self.tag == "tensor" and self.other is not None:
            return {"tag": "tensor", "with": self.other}
        if self.tag in ("sym", "ext"):
            return f"{self.tag}:{self.degree}"
        return self.tag


# ---------------------------------------------------------------------------
# the model

@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    spec: dict
    rep_dim: int
    p_basis: np.ndarray
    k_basis: np.ndarray
    a_indices: tuple
    p_defining: np.ndarray
    k_defining: np.ndarray
    defining_blocks: tuple
    inner_product_scale: Fraction
    a_gram: tuple
    a_to_ortho: np.ndarray
    a_display: tuple
    display_names: tuple
    weights: tuple
    blocks: tuple
    chamber: tuple
    factors: tuple = ()
    p_slices: tuple = ()
    k_slices: tuple = ()
    dim_cap: int = DIM_CAP

    # -- sizes ------------------------------------------------------------
    @property
    def rank(self) -> int:
        return len(self.a_indices)

    @property
    def dim_p(self) -> int:
        return len(self.p_basis)

    @property
    def dim_k(self) -> int:
        return len(self.k_basis)

    @property
    def block_dims(self) -> tuple:
        return tuple(b.shape[1] for b in self.blocks)

    @property
    def kind_tag(self) -> str:
        return self.kind

    # -- a coordinates ----------------------------------------------------
    @property
    def a_ops(self) -> np.ndarray:
        return self.p_basis[list(self.a_indices)]

    def rational_to_ortho(self, x) -> np.ndarray:
        return self.a_to_ortho @ np.array([float(t) for t in x], dtype=float)

    def ortho_to_rational(self, y) -> np.ndarray:
        return np.linalg.solve(self.a_to_ortho, np.asarray(y, dtype=float))

    def display(self, y) -> np.ndarray:
        """Display coordinates of an ortho-coordinate vector."""
        D = np.array([[float(t) for t in row] for row in self.a_display], dtype=float)
        return D @ self.ortho_to_rational(y)

    def display_exact(self, x) -> tuple:
        return exact.matvec(self.a_display, x)

    @property
    def weights_ortho(self) -> np.ndarray:
        return np.array([self.rational_to_ortho(w) for w in self.weights]).reshape(len(self.weights), self.rank)

    @property
    def chamber_ortho(self) -> np.ndarray:
        """Chamber functionals acting on ortho coordinates (rows)."""
        if not self.chamber:
            return np.zeros((0, self.rank))
        L = np.array([[float(t) for t in row] for row in self.chamber], dtype=float)
        return L @ np.linalg.inv(self.a_to_ortho)

    def in_chamber(self, y, tol: float = 1e-10) -> bool:
        L = self.chamber_ortho
        return bool(L.size == 0 or np.all(L @ np.asarray(y, dtype=float) >= -tol))

    def weight_multiset(self) -> Counter:
        c: Counter = Counter()
        for w, d in zip(self.weights, self.block_dims):
            c[w] += d
        return c

    # -- p elements -------------------------------------------------------
    def p_operator(self, coeffs, defining: bool = False) -> np.ndarray:
        ops = self.p_defining if defining else self.p_basis
        return combine(coeffs, ops)

    def k_operator(self, coeffs, defining: bool = False) -> np.ndarray:
        ops = self.k_defining if defining else self.k_basis
        return combine(coeffs, ops)

    def inner(self, X: np.ndarray, Y: np.ndarray) -> float:
        """Invariant inner product on the defining realization."""
        total = 0.0
        for start, stop, s in self.defining_blocks:
            total += float(s) * float(np.real(np.trace(X[start:stop, start:stop] @ Y[start:stop, start:stop].conj().T)))
        return total

    def p_coeffs(self, X_def: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a defining-realization matrix onto p."""
        return np.array([self.inner(X_def, P) for P in self.p_defining])

    def p_coeffs_batch(self, Xs: np.ndarray) -> np.ndarray:
        """p_coeffs for a stack of defining-realization matrices (N x d x d)."""
        Xs = np.asarray(Xs)
        out = np.zeros((len(Xs), self.dim_p))
        for start, stop, s in self.defining_blocks:
            blk = slice(start, stop)
            out += float(s) * np.real(np.einsum("nij,bij->nb", Xs[:, blk, blk], self.p_defining[:, blk, blk].conj()))
        return out

    def k_coeffs(self, X_def: np.ndarray) -> np.ndarray:
        return np.array([self.inner(X_def, K) for K in self.k_defining])

    def ad(self, k_def: np.ndarray, coeffs) -> np.ndarray:
        """Coefficients of Ad(k) applied to the p element with ``coeffs``."""
        X = self.p_operator(coeffs, defining=True)
        return self.p_coeffs(k_def @ X @ np.linalg.inv(k_def))

    def a_coeffs(self, y) -> np.ndarray:
        """Embed ortho a-coordinates into full p coefficients."""
        c = np.zeros(self.dim_p)
        c[list(self.a_indices)] = np.asarray(y, dtype=float)
        return c


# ---------------------------------------------------------------------------
# kind constructors

@dataclass
class _Base:
    kind: str
    p_def: np.ndarray
    k_def: np.ndarray
    p_std: np.ndarray
    k_std: np.ndarray
    def_blocks: tuple
    rank: int
    T: np.ndarray
    Q: list
    display: list
    display_names: tuple
    chamber: list
    std_weights: list
    a_indices: tuple = ()
    factors: tuple = ()
    p_slices: tuple = ()
    k_slices: tuple = ()


def _E(n, i, j):
    M = np.zeros((n, n), dtype=complex)
    M[i, j] = 1.0
    return M


def _gram_schmidt(raw: list, inner, tol: float = 1e-12) -> tuple[list, np.ndarray]:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Returns the orthonormal list and the coefficient matrix C with
    ``ortho[i] = sum_j C[i, j] raw[j]``.
    """
    out: list = []
    coeffs: list = []
    m = len(raw)
    for i, X in enumerate(raw):
        v = X.copy()
        c = np.zeros(m)
        c[i] = 1.0
        for _ in range(2):
            for Y, cy in zip(out, coeffs):
                h = inner(v, Y)
                v = v - h * Y
                c = c - h * cy
        nrm = math.sqrt(max(inner(v, v), 0.0))
        if nrm < tol:
            continue
        out.append(v / nrm)
        coeffs.append(c / nrm)
    return out, np.array(coeffs).reshape(len(out), m)


def _def_inner(blocks):
    def inner(X, Y):
        total = 0.0
        for start, stop, s in blocks:
            total += float(s) * float(np.real(np.trace(X[start:stop, start:stop] @ Y[start:stop, start:stop].conj().T)))
        return total
    return inner


def _finish_kind(kind, p_raw, k_raw, p_std_raw, k_std_raw, rank, scale, display, names, chamber) -> _Base:
    n = p_raw[0].shape[0] if p_raw else 0
    blocks = ((0, n, scale),)
    inner = _def_inner(blocks)
    A, C = _gram_schmidt(p_raw, inner)
    if len(A) != len(p_raw):
        raise DegenerateSpec("p basis is linearly dependent")
    K, Ck = _gram_schmidt(k_raw, inner) if k_raw else ([], np.zeros((0, 0)))
    p_def = np.array(A)
    p_std = np.tensordot(C, np.array(p_std_raw), axes=(1, 0))
    if K:
        k_def = np.array(K)
        k_std = np.tensordot(Ck, np.array(k_std_raw), axes=(1, 0))
    else:
        k_def = np.zeros((0, n, n), dtype=complex)
        k_std = np.zeros((0,) + p_std.shape[1:], dtype=complex)
    R = p_raw[:rank]
    T = np.array([[inner(p_def[j], R[k]) for k in range(rank)] for j in range(rank)]).reshape(rank, rank)
    Q = [tuple(exact.rationalize(inner(R[k], R[l]), tol=1e-12) for l in range(rank)) for k in range(rank)]
    base = _Base(kind, p_def, k_def, p_std, k_std, blocks, rank, T, Q, display, names, chamber, [])
    base.a_indices = tuple(range(rank))
    base.std_weights = _rational_weight_multiset(base)
    return base


def _torus(params, scale) -> _Base:
    raw = params.get("weights")
    if not raw:
        raise DegenerateSpec("torus needs a nonempty weight list")
    W = [exact.vec(w if isinstance(w, (list, tuple)) else [w]) for w in raw]
    r = len(W[0])
    if r == 0 or any(len(w) != r for w in W):
        raise DegenerateSpec("torus weights must share a positive rank")
    n = len(W)
    p_raw = [_E(r, k, k) for k in range(r)]
    p_std = [np.diag([float(w[k]) for w in W]).astype(complex) for k in range(r)]
    k_raw = [1j * _E(r, k, k) for k in range(r)]
    k_std = [1j * P for P in p_std]
    ident = [exact.vec([int(i == j) for j in range(r)]) for i in range(r)]
    names = tuple(f"x{k}" for k in range(r))
    base = _finish_kind("torus", p_raw, k_raw, p_std, k_std, r, scale, ident, names, [])
    if n == 0:
        raise DegenerateSpec("zero-dimensional V")
    return base


def _sl_n(params, scale) -> _Base:
    n = int(params.get("n", 0))
    if n < 2:
        raise DegenerateSpec("sl_n_real needs n >= 2")
    p_raw = [_E(n, k, k) - _E(n, k + 1, k + 1) for k in range(n - 1)]
    p_raw += [_E(n, i, j) + _E(n, j, i) for i in range(n) for j in range(i + 1, n)]
    k_raw = [_E(n, i, j) - _E(n, j, i) for i in range(n) for j in range(i + 1, n)]
    D = [exact.vec([int(i == k) - int(i == k + 1) for k in range(n - 1)]) for i in range(n)]
    chamber = [exact.sub(D[j], D[j + 1]) for j in range(n - 1)]
    names = tuple(f"d{i}" for i in range(n))
    return _finish_kind("sl_n_real", p_raw, k_raw, p_raw, k_raw, n - 1, scale, D, names, chamber)


def _su_p_q(params, scale) -> _Base:
    p, q = int(params.get("p", 0)), int(params.get("q", 0))
    if p < 1 or q < 1:
        raise DegenerateSpec("su_p_q needs p, q >= 1")
    n = p + q
    r = min(p, q)
    p_raw = [_E(n, k, p + k) + _E(n, p + k, k) for k in range(r)]
    p_raw += [_E(n, i, p + j) + _E(n, p + j, i) for i in range(p) for j in range(q) if i != j]
    p_raw += [1j * (_E(n, i, p + j) - _E(n, p + j, i)) for i in range(p) for j in range(q)]
    k_raw = []
    for off, m in ((0, p), (p, q)):
        for i in range(m):
            for j in range(i + 1, m):
                k_raw.append(_E(n, off + i, off + j) - _E(n, off + j, off + i))
                k_raw.append(1j * (_E(n, off + i, off + j) + _E(n, off + j, off + i)))
        for i in range(m - 1):
            k_raw.append(1j * (_E(n, off + i, off + i) - _E(n, off + i + 1, off + i + 1)))
    k_raw.append(1j * np.diag([1.0 / p] * p + [-1.0 / q] * q).astype(complex))
    ident = [exact.vec([int(i == j) for j in range(r)]) for i in range(r)]
    chamber = [exact.vec([int(j == k) - int(j == k + 1) for j in range(r)]) for k in range(r - 1)]
    chamber.append(exact.vec([int(j == r - 1) for j in range(r)]))
    names = tuple(f"t{k}" for k in range(r))
    return _finish_kind("su_p_q", p_raw, k_raw, p_raw, k_raw, r, scale, ident, names, chamber)


def _custom(params, scale) -> _Base:
    P = [matrix_from_json(M) for M in params["p_basis"]]
    Kops = [matrix_from_json(M) for M in params.get("k_basis", [])]
    a_idx = [int(i) for i in params["a_indices"]]
    if not P or P[0].shape[0] == 0:
        raise DegenerateSpec("zero-dimensional V")
    order = a_idx + [i for i in range(len(P)) if i not in a_idx]
    P = [P[i] for i in order]
    r = len(a_idx)
    n = P[0].shape[0]
    _check_commuting(np.array(P[:r]))
    blocks = ((0, n, scale),)
    inner = _def_inner(blocks)
    p_def = np.array(P)
    gram = np.array([[inner(X, Y) for Y in P] for X in P])
    if np.max(np.abs(gram - np.eye(len(P)))) > TOL_GRAM:
        raise NonCompatible("custom p_basis is not orthonormal for the trace form")
    k_def = np.array(Kops) if Kops else np.zeros((0, n, n), dtype=complex)
    chamber = [exact.vec(row) for row in params.get("chamber", [])]
    ident = [exact.vec([int(i == j) for j in range(r)]) for i in range(r)]
    Q = [tuple(Fraction(int(i == j)) for j in range(r)) for i in range(r)]
    names = tuple(f"y{k}" for k in range(r))
    base = _Base("custom", p_def, k_def, p_def, k_def, blocks, r, np.eye(r), Q, ident, names, chamber, [])
    base.a_indices = tuple(range(r))
    base.std_weights = _rational_weight_multiset(base)
    return base


def _product(params, scale) -> _Base:
    specs = params.get("factors") or []
    if len(specs) != 2:
        raise DegenerateSpec("product needs exactly two factors")
    f1, f2 = (build_model(s) for s in specs)
    d1, d2 = f1.p_defining.shape[1], f2.p_defining.shape[1]
    n1, n2 = f1.rep_dim, f2.rep_dim
    d = d1 + d2

    def pad(ops, first):
        out = np.zeros((len(ops), d, d), dtype=complex)
        if first:
            out[:, :d1, :d1] = ops
        else:
            out[:, d1:, d1:] = ops
        return out

    p_def = np.concatenate([pad(f1.p_defining, True), pad(f2.p_defining, False)])
    k_def = np.concatenate([pad(f1.k_defining, True), pad(f2.k_defining, False)])
    I1, I2 = np.eye(n1), np.eye(n2)
    p_std = np.array([np.kron(P, I2) for P in f1.p_basis] + [np.kron(I1, P) for P in f2.p_basis]).reshape(-1, n1 * n2, n1 * n2)
    k_std = np.array([np.kron(K, I2) for K in f1.k_basis] + [np.kron(I1, K) for K in f2.k_basis]).reshape(-1, n1 * n2, n1 * n2)
    blocks = tuple(f1.defining_blocks) + tuple((a + d1, b + d1, s) for a, b, s in f2.defining_blocks)
    r1, r2 = f1.rank, f2.rank
    a_idx = tuple(f1.a_indices) + tuple(f1.dim_p + i for i in f2.a_indices)
    T = scipy.linalg.block_diag(f1.a_to_ortho, f2.a_to_ortho).reshape(r1 + r2, r1 + r2)
    Z = Fraction(0)
    Q = [tuple(row) + (Z,) * r2 for row in f1.a_gram] + [(Z,) * r1 + tuple(row) for row in f2.a_gram]
    disp = [tuple(row) + (Z,) * r2 for row in f1.a_display] + [(Z,) * r1 + tuple(row) for row in f2.a_display]
    chamber = [tuple(row) + (Z,) * r2 for row in f1.chamber] + [(Z,) * r1 + tuple(row) for row in f2.chamber]
    names = tuple(f"f0.{s}" for s in f1.display_names) + tuple(f"f1.{s}" for s in f2.display_names)
    ws = [w1 + w2 for w1 in _expand(f1) for w2 in _expand(f2)]
    base = _Base("product", p_def, k_def, p_std, k_std, blocks, r1 + r2, T, Q, disp, names, chamber, ws)
    base.a_indices = a_idx
    base.factors = (f1, f2)
    base.p_slices = ((0, f1.dim_p), (f1.dim_p, f1.dim_p + f2.dim_p))
    base.k_slices = ((0, f1.dim_k), (f1.dim_k, f1.dim_k + f2.dim_k))
    return base


def _expand(m: Model) -> list:
    out = []
    for w, dim in zip(m.weights, m.block_dims):
        out.extend([w] * dim)
    return out


_BUILDERS = {"torus": _torus, "sl_n_real": _sl_n, "su_p_q": _su_p_q, "custom": _custom, "product": _product}


# ---------------------------------------------------------------------------
# weights

def _weight_blocks(a_ops: np.ndarray, n: int, group_tol: float = 1e-7):
    """Simultaneous eigenspaces of commuting Hermitian operators.

    Returns (blocks, float_weights) where blocks are orthonormal column
    matrices.  Diagonal operators keep the coordinate order (first
    appearance); otherwise blocks are sorted by weight, descending.
    """
    r = len(a_ops)
    if r == 0:
        return [np.eye(n, dtype=complex)], [np.zeros(0)]
    diag = all(not np.any(A - np.diag(np.diag(A))) for A in a_ops)
    if diag:
        lam = np.real(np.array([np.diag(A) for A in a_ops])).T
        U = np.eye(n, dtype=complex)
        order_sorted = False
    else:
        rng = np.random.default_rng(20240917)
        c = rng.standard_normal(r)
        H = np.tensordot(c, a_ops, axes=(0, 0))
        _, U = np.linalg.eigh(H)
        lam = np.real(np.einsum("ai,jab,bi->ij", U.conj(), a_ops, U))
        order_sorted = True
    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i in range(n):
        for g, rep in zip(groups, reps):
            if np.max(np.abs(lam[i] - rep)) < group_tol:
                g.append(i)
                break
        else:
            groups.append([i])
            reps.append(lam[i])
    weights = [np.mean(lam[g], axis=0) for g in groups]
    blocks = [U[:, g] for g in groups]
    if order_sorted:
        order = sorted(range(len(groups)), key=lambda i: tuple(-np.round(weights[i], 9)))
        blocks = [blocks[i] for i in order]
        weights = [weights[i] for i in order]
    return blocks, weights


def _rational_weight_multiset(base: _Base) -> list:
    """Exact weights (rational coordinates) of the standard representation."""
    n = base.p_std.shape[1]
    blocks, fw = _weight_blocks(base.p_std[list(base.a_indices)], n)
    Qinv = exact.inverse(base.Q) if base.rank else []
    out = []
    for U, y in zip(blocks, fw):
        f = base.T.T @ y if base.rank else np.zeros(0)
        try:
            fr = tuple(exact.rationalize(v, max_den=1000, tol=1e-8) for v in f)
        except ValueError as exc:
            raise DegenerateSpec(f"weights are not rational: {exc}") from None
        x = exact.matvec(Qinv, fr) if base.rank else ()
        out.extend([x] * U.shape[1])
    return out


# ---------------------------------------------------------------------------
# functors on operator lists

def _sym_embedding(n: int, k: int, alternating: bool) -> np.ndarray:
    if n**k > _TENSOR_ARRAY_CAP:
        raise DimensionOverflow(f"intermediate tensor power {n}^{k} too large")
    gen = itertools.combinations(range(n), k) if alternating else itertools.combinations_with_replacement(range(n), k)
    combos = list(gen)
    S = np.zeros((n**k, len(combos)))
    shape = (n,) * k
    for col, c in enumerate(combos):
        if alternating:
            perms = list(itertools.permutations(range(k)))
            val = 1.0 / math.sqrt(len(perms))
            for perm in perms:
                idx = tuple(c[p] for p in perm)
                S[np.ravel_multi_index(idx, shape), col] = _perm_sign(perm) * val
        else:
            perms = set(itertools.permutations(c))
            val = 1.0 / math.sqrt(len(perms))
            for idx in perms:
                S[np.ravel_multi_index(idx, shape), col] = val
    return S


def _perm_sign(perm) -> int:
    sign, seen = 1, set()
    for i in range(len(perm)):
        if i in seen:
            continue
        j, length = i, 0
        while j not in seen:
            seen.add(j)
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _derive_power(ops: np.ndarray, S: np.ndarray, n: int, k: int) -> np.ndarray:
    N = S.shape[1]
    Tn = S.reshape((n,) * k + (N,)).astype(complex)
    out = []
    for X in ops:
        acc = np.zeros_like(Tn)
        for ax in range(k):
            acc += np.moveaxis(np.tensordot(X, Tn, axes=([1], [ax])), 0, ax)
        out.append(S.T @ acc.reshape(n**k, N))
    return np.array(out).reshape(len(ops), N, N)


def _apply_functor(P, K, W, f: RepFunctor, base_kind, base_params, cap):
    n = P.shape[1]
    if f.tag == "standard":
        return P, K, W
    if f.tag == "dual":
        return -np.transpose(P, (0, 2, 1)), -np.transpose(K, (0, 2, 1)), [tuple(-x for x in w) for w in W]
    if f.tag in ("sym", "ext"):
        k = f.degree
        alt = f.tag == "ext"
        if alt and k > n:
            raise DegenerateSpec(f"ext({k}) needs k <= rep_dim = {n}")
        N = math.comb(n, k) if alt else math.comb(n + k - 1, k)
        if N > cap:
            raise DimensionOverflow(f"{f.tag}({k}) of a {n}-dimensional representation has dimension {N} > {cap}")
        S = _sym_embedding(n, k, alt)
        gen = itertools.combinations(W, k) if alt else itertools.combinations_with_replacement(W, k)
        W2 = [tuple(sum(col, Fraction(0)) for col in zip(*ws)) for ws in gen]
        return _derive_power(P, S, n, k), _derive_power(K, S, n, k), W2
    # tensor
    if f.other is None:
        P2, K2, W2 = P, K, W
    else:
        other = f.other if isinstance(f.other, Model) else build_model(f.other)
        if group_key(other.kind, other.spec.get("params", {})) != group_key(base_kind, base_params):
            raise NonCompatible("tensor factors must be models of the same group")
        P2, K2, W2 = other.p_basis, other.k_basis, _expand(other)
    m = P2.shape[1]
    if n * m > cap:
        raise DimensionOverflow(f"tensor product dimension {n * m} > {cap}")
    In, Im = np.eye(n), np.eye(m)
    Pn = np.array([np.kron(A, Im) + np.kron(In, B) for A, B in zip(P, P2)]).reshape(len(P), n * m, n * m)
    Kn = np.array([np.kron(A, Im) + np.kron(In, B) for A, B in zip(K, K2)]).reshape(len(K), n * m, n * m)
    Wn = [exact.add(w1, w2) for w1 in W for w2 in W2]
    return Pn, Kn, Wn


def group_key(kind, params) -> str:
    """Identifies the acting group; models with equal keys can be tensored."""
    if kind == "torus":
        w = params.get("weights") or [[]]
        return f"torus:{len(w[0]) if isinstance(w[0], (list, tuple)) else 1}"
    if kind == "product":
        fs = params.get("factors", [])
        return "product(" + ",".join(group_key(f["kind"], f.get("params", {})) for f in fs) + ")"
    if kind == "custom":
        return "custom:" + json.dumps(params.get("p_basis"), sort_keys=True)
    return kind + ":" + json.dumps(params, sort_keys=True, default=str)


def same_group(a: Model, b: Model) -> bool:
    return group_key(a.kind, a.spec.get("params", {})) == group_key(b.kind, b.spec.get("params", {}))


def _label_blocks(P, a_indices, W, T, n):
    blocks, fw = _weight_blocks(P[list(a_indices)], n)
    exact_w = list(Counter(W).keys())
    ortho = {w: T @ np.array([float(t) for t in w]) for w in exact_w}
    labels = []
    for U, y in zip(blocks, fw):
        best = min(exact_w, key=lambda w: float(np.max(np.abs(ortho[w] - y))) if len(y) else 0.0)
        if len(y) and np.max(np.abs(ortho[best] - y)) > 1e-7:
            raise NonCompatible("diagonalized weight does not match the exact weight multiset")
        labels.append(best)
    got = Counter()
    for w, U in zip(labels, blocks):
        got[w] += U.shape[1]
    if got != Counter(W):
        # one exact weight split across numerically separated groups: merge
        merged: dict = {}
        for w, U in zip(labels, blocks):
            merged.setdefault(w, []).append(U)
        labels = list(merged)
        blocks = [np.hstack(us) for us in merged.values()]
        got = Counter({w: U.shape[1] for w, U in zip(labels, blocks)})
        if got != Counter(W):
            raise NonCompatible("weight multiplicities disagree with the functor construction")
    return tuple(labels), tuple(blocks)


# ---------------------------------------------------------------------------
# public construction

def normalize_spec(spec: dict) -> dict:
    out = {"kind": spec["kind"], "params": spec.get("params", {})}
    fs = spec.get("functors") or []
    out["functors"] = [RepFunctor.parse(f).to_json() for f in fs]
    if spec.get("chamber") is not None:
        out["chamber"] = [[str(exact.frac(t)) for t in row] for row in spec["chamber"]]
    if "inner_product_scale" in spec:
        out["inner_product_scale"] = str(exact.frac(spec["inner_product_scale"]))
    if "seed" in spec:
        out["seed"] = spec["seed"]
    return out


def build_model(spec: dict, dim_cap: int = DIM_CAP) -> Model:
    """Build and validate a model from a declarative description.

    ``spec`` has keys ``kind`` (torus, sl_n_real, su_p_q, product, custom),
    ``params``, optional ``functors`` (e.g. ``["sym:2", "dual"]``), optional
    ``chamber`` override (functionals in rational coordinates) and optional
    ``inner_product_scale``.
    """
    if isinstance(spec, Model):
        return spec
    kind = spec.get("kind")
    if kind not in _BUILDERS:
        raise UnsupportedKind(f"unknown model kind {kind!r}")
    scale = exact.frac(spec.get("inner_product_scale", 1))
    if scale <= 0:
        raise DegenerateSpec("inner_product_scale must be positive")
    params = spec.get("params", {})
    base = _BUILDERS[kind](params, scale)
    P, K, W = base.p_std, base.k_std, list(base.std_weights)
    if P.shape[1] == 0:
        raise DegenerateSpec("zero-dimensional V")
    functors = [RepFunctor.parse(f) for f in spec.get("functors") or []]
    for f in functors:
        P, K, W = _apply_functor(P, K, W, f, kind, params, dim_cap)
    n = P.shape[1]
    if n > dim_cap:
        raise DimensionOverflow(f"representation dimension {n} > {dim_cap}")
    P = np.ascontiguousarray(P)
    K = np.ascontiguousarray(K)
    _check_commuting(P[list(base.a_indices)])
    weights, blocks = _label_blocks(P, base.a_indices, W, base.T, n)
    chamber = base.chamber
    if spec.get("chamber") is not None:
        chamber = [exact.vec(row) for row in spec["chamber"]]
    for arr in (P, K, base.p_def, base.k_def, base.T):
        arr.setflags(write=False)
    for U in blocks:
        U.setflags(write=False)
    m = Model(
        kind=kind,
        spec=normalize_spec(spec),
        rep_dim=n,
        p_basis=P,
        k_basis=K,
        a_indices=tuple(base.a_indices),
        p_defining=base.p_def,
        k_defining=base.k_def,
        defining_blocks=tuple(base.def_blocks),
        inner_product_scale=scale,
        a_gram=tuple(tuple(r) for r in base.Q),
        a_to_ortho=base.T,
        a_display=tuple(tuple(r) for r in base.display),
        display_names=tuple(base.display_names),
        weights=weights,
        blocks=blocks,
        chamber=tuple(tuple(r) for r in chamber),
        factors=tuple(base.factors),
        p_slices=tuple(base.p_slices),
        k_slices=tuple(base.k_slices),
        dim_cap=dim_cap,
    )
    report = validate_model(m)
    if not report.passed:
        names = {c.name for c in report.failures()}
        if "CommutatorResidual" in names:
            raise NonCommutative(report.summary())
        raise NonCompatible(report.summary())
    return m


def _check_commuting(a_ops):
    for i in range(len(a_ops)):
        for j in range(i + 1, len(a_ops)):
            C = a_ops[i] @ a_ops[j] - a_ops[j] @ a_ops[i]
            if np.max(np.abs(C)) > TOL_ENTRY * max(1.0, a_ops.shape[1]):
                raise NonCommutative(f"a operators {i} and {j} do not commute")


def derived_model(m: Model, f: RepFunctor | str | dict, dim_cap: int | None = None) -> Model:
    """Model of the representation obtained by applying ``f`` to ``m``.

    For ``tensor`` the other factor may be a Model of the same group.
    """
    f = RepFunctor.parse(f)
    if f.tag == "tensor" and isinstance(f.other, Model):
        f = RepFunctor("tensor", 1, _full_spec(f.other))
    spec = dict(m.spec)
    spec["functors"] = list(m.spec.get("functors", [])) + [f.to_json()]
    if m.kind == "custom":
        return _derive_custom(m, f, dim_cap or m.dim_cap)
    return build_model(spec, dim_cap or m.dim_cap)


def _full_spec(m: Model) -> dict:
    if m.kind == "custom":
        raise UnsupportedKind("tensoring with a custom model needs the custom operators inline")
    return m.spec


def tensor_models(models: Sequence[Model], dim_cap: int = DIM_CAP) -> Model:
    """Tensor product of several models of the same group, left to right."""
    out = models[0]
    for other in models[1:]:
        out = derived_model(out, RepFunctor("tensor", 1, other.spec), dim_cap)
    return out


def _derive_custom(m: Model, f: RepFunctor, cap: int) -> Model:
    P, K, W = _apply_functor(m.p_basis, m.k_basis, _expand(m), f, m.kind, m.spec.get("params", {}), cap)
    weights, blocks = _label_blocks(P, m.a_indices, W, m.a_to_ortho, P.shape[1])
    spec = dict(m.spec)
    spec["functors"] = list(m.spec.get("functors", [])) + [f.to_json()]
    return replace(m, spec=spec, rep_dim=P.shape[1], p_basis=P, k_basis=K, weights=weights, blocks=blocks)


# ---------------------------------------------------------------------------
# validation

@dataclass
class Check:
    name: str
    residual: float
    threshold: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.threshold)


@dataclass
class DiagnosticsReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.checks), default=0.0)

    def failures(self) -> list:
        return [c for c in self.checks if not c.ok]

    def summary(self) -> str:
        lines = [f"{c.name}: {c.residual:.3e} (<= {c.threshold:.0e}) {'ok' if c.ok else 'FAIL'}" for c in self.checks]
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [
            {"name": c.name, "residual": c.residual, "threshold": c.threshold, "ok": c.ok} for c in self.checks]}


def _span_residual(targets: list, basis: np.ndarray) -> float:
    """Max relative distance of each target matrix from the real span of basis."""
    if not targets:
        return 0.0
    if len(basis) == 0:
        return max(float(np.max(np.abs(t))) for t in targets)
    B = np.concatenate([basis.reshape(len(basis), -1).real, basis.reshape(len(basis), -1).imag], axis=1).T
    worst = 0.0
    for t in targets:
        y = np.concatenate([t.ravel().real, t.ravel().imag])
        c, *_ = np.linalg.lstsq(B, y, rcond=None)
        worst = max(worst, float(np.max(np.abs(B @ c - y))) if y.size else 0.0)
    return worst


def validate_model(m: Model) -> DiagnosticsReport:
    """Measure every model invariant; never raises."""
    rep = DiagnosticsReport()
    add = rep.checks.append
    add(Check("HermitianResidual", max([herm_residual(P) for P in m.p_basis] + [herm_residual(P) for P in m.p_defining] + [0.0]), TOL_ENTRY))
    add(Check("SkewHermitianResidual", max([skew_residual(K) for K in m.k_basis] + [skew_residual(K) for K in m.k_defining] + [0.0]), TOL_ENTRY))
    a = m.a_ops
    comm = 0.0
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            comm = max(comm, float(np.max(np.abs(a[i] @ a[j] - a[j] @ a[i]))))
    add(Check("CommutatorResidual", comm, TOL_ENTRY))
    G = np.array([[m.inner(X, Y) for Y in m.p_defining] for X in m.p_defining]).reshape(m.dim_p, m.dim_p)
    add(Check("GramResidual", float(np.max(np.abs(G - np.eye(m.dim_p)))) if m.dim_p else 0.0, TOL_GRAM))
    blk = 0.0
    W = m.weights_ortho
    for U, y in zip(m.blocks, W):
        for j, A in enumerate(a):
            blk = max(blk, float(np.max(np.abs(A @ U - y[j] * U))))
    if m.blocks:
        Uall = np.hstack(m.blocks)
        if Uall.shape[1] != m.rep_dim:
            blk = max(blk, float("inf"))
        else:
            blk = max(blk, float(np.max(np.abs(Uall.conj().T @ Uall - np.eye(m.rep_dim)))))
    add(Check("WeightBlockResidual", blk, TOL_BLOCK))
    # Cartan closure on V when small, otherwise on the defining realization
    if m.rep_dim <= 64:
        Pops, Kops = m.p_basis, m.k_basis
    else:
        Pops, Kops = m.p_defining, m.k_defining
    kp = [Kx @ Px - Px @ Kx for Kx in Kops for Px in Pops]
    pp = [Pops[i] @ Pops[j] - Pops[j] @ Pops[i] for i in range(len(Pops)) for j in range(i + 1, len(Pops))]
    closure = max(_span_residual(kp, Pops), _span_residual(pp, Kops))
    add(Check("CartanClosureResidual", closure, TOL_CLOSURE))
    return rep


# ---------------------------------------------------------------------------
# group elements and sampling

@dataclass(frozen=True, eq=False)
class GroupElement:
    """g = k exp(xi) with k = exp(kappa), kappa in k and xi in p.

    ``operator`` acts on V, ``defining`` is the same element in the defining
    realization.
    """

    operator: np.ndarray
    defining: np.ndarray
    k_coeffs: np.ndarray
    p_coeffs: np.ndarray
    k_part: np.ndarray
    p_part: np.ndarray

    def factorization_residual(self) -> float:
        return float(np.max(np.abs(self.k_part @ self.p_part - self.operator)))

    def act(self, v: np.ndarray) -> np.ndarray:
        return self.operator @ v


def group_element(m: Model, k_coeffs=None, p_coeffs=None) -> GroupElement:
    kc = np.zeros(m.dim_k) if k_coeffs is None else np.asarray(k_coeffs, dtype=float)
    pc = np.zeros(m.dim_p) if p_coeffs is None else np.asarray(p_coeffs, dtype=float)
    kV = expm_skew(m.k_operator(kc)) if m.dim_k else np.eye(m.rep_dim, dtype=complex)
    pV = expm_herm(m.p_operator(pc))
    d = m.p_defining.shape[1]
    kD = expm_skew(m.k_operator(kc, defining=True)) if m.dim_k else np.eye(d, dtype=complex)
    pD = expm_herm(m.p_operator(pc, defining=True))
    return GroupElement(kV @ pV, kD @ pD, kc, pc, kV, pV)


def _sample_k_defining(m: Model, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of K in the defining realization."""
    if m.kind == "torus":
        theta = rng.uniform(0.0, 2 * np.pi, m.rank)
        return np.diag(np.exp(1j * theta))
    if m.kind == "sl_n_real":
        n = m.p_defining.shape[1]
        return special_ortho_group.rvs(n, random_state=rng).astype(complex)
    if m.kind == "su_p_q":
        p, q = int(m.spec["params"]["p"]), int(m.spec["params"]["q"])
        u1 = unitary_group.rvs(p, random_state=rng) if p > 1 else np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.ones((1, 1))
        u2 = unitary_group.rvs(q, random_state=rng) if q > 1 else np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.ones((1, 1))
        k = scipy.linalg.block_diag(u1, u2)
        det = np.linalg.det(k)
        k[:, 0] = k[:, 0] / det
        return k
    if m.kind == "product":
        return scipy.linalg.block_diag(*[_sample_k_defining(f, rng) for f in m.factors])
    raise UnsupportedKind(f"no K sampler registered for kind {m.kind!r}")


def sample_k_defining_batch(m: Model, N: int, rng: np.random.Generator) -> np.ndarray:
    """N Haar samples of K in the defining realization (N x d x d)."""
    d = m.p_defining.shape[1]

    def _unitary(n):
        if n == 1:
            return np.exp(1j * rng.uniform(0, 2 * np.pi, N)).reshape(N, 1, 1)
        return np.asarray(unitary_group.rvs(n, size=N, random_state=rng)).reshape(N, n, n)

    if m.kind == "torus":
        theta = rng.uniform(0.0, 2 * np.pi, (N, m.rank))
        out = np.zeros((N, d, d), dtype=complex)
        out[:, np.arange(d), np.arange(d)] = np.exp(1j * theta)
        return out
    if m.kind == "sl_n_real":
        return np.asarray(special_ortho_group.rvs(d, size=N, random_state=rng)).reshape(N, d, d).astype(complex)
    if m.kind == "su_p_q":
        p, q = int(m.spec["params"]["p"]), int(m.spec["params"]["q"])
        out = np.zeros((N, d, d), dtype=complex)
        out[:, :p, :p] = _unitary(p)
        out[:, p:, p:] = _unitary(q)
        det = np.linalg.det(out)
        out[:, :, 0] /= det[:, None]
        return out
    if m.kind == "product":
        out = np.zeros((N, d, d), dtype=complex)
        start = 0
        for f in m.factors:
            df = f.p_defining.shape[1]
            out[:, start:start + df, start:start + df] = sample_k_defining_batch(f, N, rng)
            start += df
        return out
    raise UnsupportedKind(f"no K sampler registered for kind {m.kind!r}")


def k_log_coeffs(m: Model, k_def: np.ndarray) -> np.ndarray:
    """Coefficients over k_basis of a logarithm of ``k_def``.

    For the compact torus the angles are read off directly; otherwise the
    principal matrix logarithm is projected onto k (a central phase may be
    dropped, which acts trivially on P(V) and on p).
    """
    if m.kind == "torus":
        theta = np.angle(np.diag(k_def))
        return np.array([m.inner(1j * np.diag(theta), K) for K in m.k_defining])
    if m.kind == "product":
        out, start = [], 0
        for f, (a, b) in zip(m.factors, m.k_slices):
            d = f.p_defining.shape[1]
            out.append(k_log_coeffs(f, k_def[start:start + d, start:start + d]))
            start += d
        return np.concatenate(out)
    L = scipy.linalg.logm(k_def)
    L = 0.5 * (L - L.conj().T)
    return m.k_coeffs(L)


def sample_group(m: Model, part: str, radius: float, seed) -> GroupElement:
    """Random group element: K Haar-like, P uniform in a p-ball, G = k exp(xi)."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if part not in ("K", "P", "G"):
        raise ValueError(f"part must be K, P or G, got {part!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kc = np.zeros(m.dim_k)
    pc = np.zeros(m.dim_p)
    if part in ("K", "G"):
        for _ in range(8):
            kd = _sample_k_defining(m, rng)
            kc = k_log_coeffs(m, kd)
            if m.dim_k == 0:
                break
            back = expm_skew(m.k_operator(kc, defining=True))
            # agreement up to a central phase
            M = back.conj().T @ kd
            if np.max(np.abs(M - M[0, 0] * np.eye(len(M)))) < 1e-8:
                break
        else:
            raise RuntimeError("matrix logarithm failed to reproduce a K sample")
    if part in ("P", "G") and m.dim_p:
        u = rng.standard_normal(m.dim_p)
        u /= np.linalg.norm(u)
        pc = radius * rng.uniform() ** (1.0 / m.dim_p) * u
    return group_element(m, kc, pc)


# ---------------------------------------------------------------------------
# persistence

def matrix_to_json(M: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]


def matrix_from_json(rows) -> np.ndarray:
    arr = np.array(rows, dtype=float)
    if arr.ndim == 3:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def model_to_json(m: Model) -> dict:
    d = dict(m.spec)
    d["rep_dim"] = m.rep_dim
    d["weights"] = [[str(t) for t in w] for w in m.weights]
    d["block_dims"] = list(m.block_dims)
    d["operators"] = {
        "p_basis": [matrix_to_json(P) for P in m.p_basis],
        "k_basis": [matrix_to_json(K) for K in m.k_basis],
        "a_indices": list(m.a_indices),
    }
    return d


def model_from_json(d: dict) -> Model:
    if d["kind"] == "custom":
        return build_model(d)
    m = build_model(d)
    ops = d.get("operators")
    if ops:
        P = np.array([matrix_from_json(x) for x in ops["p_basis"]]).reshape(m.p_basis.shape)
        if np.max(np.abs(P - m.p_basis)) > 1e-9:
            raise DegenerateSpec("persisted operators disagree with the rebuilt model")
    return m


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def save_model(m: Model, path) -> None:
    from .io import atomic_write_text
    atomic_write_text(path, json.dumps(model_to_json(m), indent=1))
