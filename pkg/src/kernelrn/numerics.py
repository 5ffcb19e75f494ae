"""Dense complex linear algebra: Hermitian eigensolves, PSD verdicts, pseudo-inverse roots.

All routines work on square complex ndarrays and state their contracts via
residual tolerances rather than algorithm choice.  Tolerances here are the
package-wide defaults; callers override per use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIG_TOL = 1e-10
HERMITIAN_TOL = 1e-8
RANK_TOL = 1e-9
PSD_CLIP_TOL = 1e-10


@dataclass(frozen=True)
class HermitianEig:
    """Eigendecomposition M = U diag(eigenvalues) U* with ascending real eigenvalues."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class PsdVerdict:
    is_psd: bool
    min_eig: float


@dataclass(frozen=True)
class PinvSqrt:
    """W = pseudo-inverse square root of a PSD matrix; rank = retained eigenvalue count."""

    W: np.ndarray
    rank: int


def _require_finite(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=np.complex128)
    if not np.all(np.isfinite(M.real)) or not np.all(np.isfinite(M.imag)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _require_square(M: np.ndarray) -> np.ndarray:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def hermiticity_defect(M: np.ndarray) -> float:
    """max_ij |M[i,j] - conj(M[j,i])|."""
    return float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0


def hermitian_eig(M: np.ndarray, hermitian_tol: float = HERMITIAN_TOL) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix (symmetrized as (M + M*)/2 first).

    Eigenvalues are ascending; eigenvector columns are orthonormal.  Raises on
    non-square input, non-finite entries, or a hermiticity defect beyond
    `hermitian_tol`.
    """
    M = _require_square(_require_finite(M))
    defect = hermiticity_defect(M)
    if defect > hermitian_tol * (1.0 + float(np.max(np.abs(M), initial=0.0))):
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
    H = 0.5 * (M + M.conj().T)
    vals, vecs = np.linalg.eigh(H)
    return HermitianEig(eigenvalues=vals, eigenvectors=vecs)


def psd_verdict(M: np.ndarray, tol: float, hermitian_tol: float = HERMITIAN_TOL) -> PsdVerdict:
    """PSD check for a Hermitian matrix: passes iff min eigenvalue >= -tol."""
    eig = hermitian_eig(M, hermitian_tol=hermitian_tol)
    min_eig = float(eig.eigenvalues[0]) if eig.eigenvalues.size else 0.0
    return PsdVerdict(is_psd=min_eig >= -tol, min_eig=min_eig)


def pinv_sqrt(M: np.ndarray, rank_tol: float = RANK_TOL) -> PinvSqrt:
    """Pseudo-inverse square root W = U_r L_r^{-1/2} U_r* of a PSD matrix.

    Eigenvalues <= rank_tol * max_eig are treated as zero; slightly negative
    eigenvalues within that band are clipped.  W M W is then the orthogonal
    projector onto the retained range.  Raises when M is indefinite beyond the
    relative cutoff.
    """
    eig = hermitian_eig(M)
    vals, vecs = eig.eigenvalues, eig.eigenvectors
    lam_max = float(vals[-1]) if vals.size else 0.0
    cutoff = rank_tol * max(lam_max, 0.0)
    if vals.size and float(vals[0]) < -max(cutoff, rank_tol):
        raise ValueError(
            f"matrix is not PSD: min eigenvalue {vals[0]:.3e} below -{max(cutoff, rank_tol):.3e}"
        )
    keep = vals > cutoff
    U = vecs[:, keep]
    inv_sqrt = 1.0 / np.sqrt(vals[keep])
    W = (U * inv_sqrt) @ U.conj().T
    return PinvSqrt(W=W, rank=int(np.count_nonzero(keep)))


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value; 0 for empty matrices."""
    M = _require_finite(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def frobenius(M: np.ndarray) -> float:
    return float(np.linalg.norm(M))


def clip_psd(M: np.ndarray, clip_tol: float = PSD_CLIP_TOL) -> tuple[np.ndarray, float]:
    """Clip small negative eigenvalues of a Hermitian matrix to zero.

    Returns (clipped matrix, raw min eigenvalue).  Raises when the minimum
    eigenvalue is below -clip_tol: the input is indefinite beyond noise and
    clipping would hide a real failure.
    """
    eig = hermitian_eig(M)
    vals, vecs = eig.eigenvalues, eig.eigenvectors
    min_eig = float(vals[0]) if vals.size else 0.0
    if min_eig < -clip_tol:
        raise ValueError(
            f"matrix indefinite beyond clip tolerance: min eigenvalue {min_eig:.3e} < -{clip_tol:.3e}"
        )
    if min_eig >= 0.0:
        return M, min_eig
    clipped = np.clip(vals, 0.0, None)
    out = (vecs * clipped) @ vecs.conj().T
    return 0.5 * (out + out.conj().T), min_eig
