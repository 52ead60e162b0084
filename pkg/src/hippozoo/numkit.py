"""Dense real matrix kernels shared by every other module.

Thin, validated wrappers around LAPACK-backed numpy/scipy routines:
matrix exponential (scaling-and-squaring Pade), symmetric
eigendecomposition, thin SVD, and regularized SPD solves.  All
functions are pure and operate on float64 arrays.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used across the library, pinned in one place."""

    symmetry: float = 1e-10
    orthonormality: float = 1e-10
    reconstruction: float = 1e-8
    zoh_vs_inverse: float = 1e-10
    spd_floor: float = 1e-12


TOL = Tolerances()


def _as_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def mat_exp(A, t=1.0):
    """Return exp(t*A) for a square matrix A."""
    A = _as_square(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(t * A)


def zoh_discretize(A, b, dt):
    """Zero-order-hold discretization of ds/dt = A s + b f.

    Returns (A_d, b_d) with A_d = exp(dt*A).  b_d is computed through the
    augmented exponential exp(dt*[[A, b], [0, 0]]) so that singular A is
    handled; when A is invertible this equals A^{-1}(A_d - I) b.
    """
    A = _as_square(A)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"dim(b)={b.shape[0]} does not match dim(A)={n}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be a positive finite scalar")
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = b
    M = scipy.linalg.expm(dt * aug)
    A_d, b_d = M[:n, :n], M[:n, n]
    if not (np.all(np.isfinite(A_d)) and np.all(np.isfinite(b_d))):
        raise FloatingPointError("ZOH discretization overflowed (dt*||A|| too large)")
    return A_d, b_d


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""

    values: np.ndarray
    vectors: np.ndarray


def sym_eig(S):
    """Full orthonormal eigendecomposition of a symmetric matrix."""
    S = _as_square(S)
    asym = np.abs(S - S.T).max(initial=0.0)
    scale = max(1.0, np.abs(S).max(initial=0.0))
    if asym > TOL.symmetry * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:g})")
    values, vectors = np.linalg.eigh(0.5 * (S + S.T))
    return SymEig(values=values, vectors=vectors)


def svd(M):
    """Thin SVD: returns (U, sigma, V) with M = U diag(sigma) V^T."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return U, s, Vt.T


def solve_spd(S, B, ridge=0.0):
    """Solve (S + ridge*I) X = B for symmetric S via eigendecomposition.

    Eigenvalues below a relative floor are clamped so that nearly singular
    systems stay bounded; an indefinite S with ridge=0 raises.
    """
    eig = sym_eig(S)
    B = np.asarray(B, dtype=float)
    lam = eig.values + ridge
    floor = TOL.spd_floor * max(lam.max(initial=0.0), 1.0)
    if ridge == 0.0 and lam.min(initial=0.0) < -floor:
        raise ValueError("matrix is indefinite and no ridge was supplied")
    lam = np.maximum(lam, floor)
    V = eig.vectors
    return V @ ((V.T @ B).T / lam).T
