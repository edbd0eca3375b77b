"""Dense matrix kernels shared by the model and flow layers."""
from __future__ import annotations

import numpy as np
import scipy.linalg


def expm_herm(H: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(t H) for Hermitian H via its eigendecomposition."""
    if _is_diagonal(H):
        return np.diag(np.exp(t * np.real(np.diag(H)))).astype(complex)
    # real input stays exactly real, so real groups never pick up imaginary round-off
    w, U = np.linalg.eigh(_real_if_exact(H))
    return ((U * np.exp(t * w)) @ U.conj().T).astype(complex)


def expm_skew(S: np.ndarray) -> np.ndarray:
    """exp(S) for skew-Hermitian S; the result is unitary."""
    if _is_diagonal(S):
        return np.diag(np.exp(np.diag(S)))
    if np.iscomplexobj(S) and not np.any(S.imag):
        return scipy.linalg.expm(S.real).astype(complex)
    w, U = np.linalg.eigh(1j * S)
    return (U * np.exp(-1j * w)) @ U.conj().T


def apply_expm_herm(H: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """exp(t H) v without forming the matrix when H is diagonal."""
    if _is_diagonal(H):
        return np.exp(t * np.real(np.diag(H))) * v
    w, U = np.linalg.eigh(_real_if_exact(H))
    return U @ (np.exp(t * w) * (U.conj().T @ v))


def _real_if_exact(M: np.ndarray) -> np.ndarray:
    return M.real if np.iscomplexobj(M) and not np.any(M.imag) else M


def _is_diagonal(M: np.ndarray) -> bool:
    return M.shape[0] == 1 or np.count_nonzero(M) == np.count_nonzero(np.diagonal(M))


def eig_herm(H: np.ndarray):
    """Eigenpairs of Hermitian H for repeated exp(t H) applications; U is None when H is diagonal."""
    if _is_diagonal(H):
        return np.real(np.diagonal(H)).copy(), None
    return np.linalg.eigh(_real_if_exact(H))


def apply_eig(w: np.ndarray, U, v: np.ndarray, t: float) -> np.ndarray:
    """exp(t H) v from eig_herm(H)."""
    if U is None:
        return np.exp(t * w) * v
    return (U @ (np.exp(t * w) * (U.conj().T @ v))).astype(complex)


def combine(coeffs: np.ndarray, ops: np.ndarray) -> np.ndarray:
    """sum_b coeffs[b] * ops[b]."""
    if len(ops) == 0:
        return np.zeros((0, 0), dtype=complex)
    c = np.asarray(coeffs, dtype=float)
    return (c @ ops.reshape(len(ops), -1)).reshape(ops.shape[1:])


def herm_residual(M: np.ndarray) -> float:
    return float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0


def skew_residual(M: np.ndarray) -> float:
    return float(np.max(np.abs(M + M.conj().T))) if M.size else 0.0


def random_unit_complex(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)
