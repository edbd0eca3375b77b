"""Small exact linear algebra over the rationals.

Vectors are tuples of :class:`fractions.Fraction`; matrices are lists of
such rows.  Everything here is exact, there are no tolerances.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Vec = tuple
Mat = list


def frac(x) -> Fraction:
    """Convert ints, strings, Fractions and float-free numbers exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        f = Fraction(x).limit_denominator(10**6)
        if abs(float(f) - x) > 1e-12 * max(1.0, abs(x)):
            raise ValueError(f"{x!r} is not a small-denominator rational")
        return f
    # numpy scalars
    if hasattr(x, "item"):
        return frac(x.item())
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def vec(xs: Iterable) -> Vec:
    return tuple(frac(x) for x in xs)


def rationalize(x: float, max_den: int = 10**6, tol: float = 1e-8) -> Fraction:
    """Closest small-denominator rational to a float, or ValueError."""
    f = Fraction(float(x)).limit_denominator(max_den)
    if abs(float(f) - float(x)) > tol:
        raise ValueError(f"{x!r} is not within {tol} of a rational with denominator <= {max_den}")
    return f


def add(u: Vec, v: Vec) -> Vec:
    return tuple(a + b for a, b in zip(u, v))


def sub(u: Vec, v: Vec) -> Vec:
    return tuple(a - b for a, b in zip(u, v))


def scale(c, u: Vec) -> Vec:
    return tuple(c * a for a in u)


def dot(u: Sequence, v: Sequence) -> Fraction:
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def matvec(M: Sequence[Sequence], v: Sequence) -> Vec:
    return tuple(dot(row, v) for row in M)


def matmul(A: Sequence[Sequence], B: Sequence[Sequence]) -> Mat:
    cols = list(zip(*B))
    return [tuple(dot(row, c) for c in cols) for row in A]


def transpose(A: Sequence[Sequence]) -> Mat:
    return [tuple(c) for c in zip(*A)]


def rref(M: Sequence[Sequence], ncols: int | None = None) -> tuple[Mat, list[int]]:
    """Reduced row echelon form and pivot columns."""
    rows = [list(r) for r in M]
    if ncols is None:
        ncols = len(rows[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        piv = rows[r][c]
        rows[r] = [x / piv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return [tuple(x) for x in rows[:r]], pivots


def rank(M: Sequence[Sequence], ncols: int | None = None) -> int:
    if not M:
        return 0
    return len(rref(M, ncols)[1])


def nullspace(M: Sequence[Sequence], ncols: int) -> list[Vec]:
    """Basis of {x : M x = 0}, canonical (reduced) form."""
    if not M:
        return [tuple(Fraction(int(i == j)) for j in range(ncols)) for i in range(ncols)]
    R, piv = rref(M, ncols)
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for row, pc in zip(R, piv):
            x[pc] = -row[f]
        basis.append(tuple(x))
    return basis


def solve(A: Sequence[Sequence], b: Sequence) -> Vec | None:
    """One solution of A x = b (free variables set to zero), or None."""
    if not A:
        return None
    n = len(A[0])
    aug = [tuple(row) + (bi,) for row, bi in zip(A, b)]
    R, piv = rref(aug, n + 1)
    if n in piv:
        return None
    x = [Fraction(0)] * n
    for row, pc in zip(R, piv):
        x[pc] = row[n]
    return tuple(x)


def inverse(A: Sequence[Sequence]) -> Mat:
    n = len(A)
    aug = [tuple(A[i]) + tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n)]
    R, piv = rref(aug, 2 * n)
    if piv[:n] != list(range(n)) or len(piv) < n:
        raise ZeroDivisionError("singular matrix")
    return [tuple(row[n:]) for row in R]


def canonical_basis(vectors: Sequence[Sequence], dim: int) -> tuple[Vec, ...]:
    """Canonical basis (rref rows) of the span; equal spans give equal output."""
    vs = [v for v in vectors if any(x != 0 for x in v)]
    if not vs:
        return ()
    R, _ = rref(vs, dim)
    return tuple(R)


def in_span(basis: Sequence[Sequence], v: Sequence, dim: int) -> bool:
    return rank(list(basis) + [tuple(v)], dim) == rank(list(basis), dim)


def subspace_le(A: Sequence[Sequence], B: Sequence[Sequence], dim: int) -> bool:
    """True when span(A) is contained in span(B)."""
    rb = rank(list(B), dim) if B else 0
    return all((rank(list(B) + [tuple(a)], dim) if B else rank([tuple(a)], dim)) == rb for a in A)


def orth_complement(basis: Sequence[Sequence], gram: Sequence[Sequence], dim: int) -> list[Vec]:
    """{x : b^T G x = 0 for all b in basis}."""
    if not basis:
        return nullspace([], dim)
    rows = [matvec(transpose(gram), b) for b in basis]
    return nullspace(rows, dim)


def affine_reduce(point: Sequence, directions: Sequence[Sequence], dim: int) -> Vec:
    """Canonical representative of point + span(directions)."""
    if not directions:
        return tuple(point)
    R, piv = rref(directions, dim)
    p = list(point)
    for row, pc in zip(R, piv):
        if p[pc] != 0:
            f = p[pc]
            p = [a - f * b for a, b in zip(p, row)]
    return tuple(p)
