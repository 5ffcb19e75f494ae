"""Kolmogorov factorization, Radon-Nikodym densities, and the kernel order test.

Given truncated Gram matrices G_K <= G_L (finite sections of two positive
definite kernels), the density is the unique operator A with
G_K = V_L* A V_L in a minimal factorization G_L = V_L* V_L; domination holds
iff 0 <= A <= I and G_K is supported in range(G_L).  For the level-shifted
kernel the density spectrum collapses to moment ratios, which is what the
shift_density / order_test pair verifies at finite order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from kernelrn.kernel import GramPair, KernelEstimate, Subalgebra, sigma_grams
from kernelrn.numerics import (
    PSD_CLIP_TOL,
    RANK_TOL,
    frobenius,
    hermitian_eig,
    psd_verdict,
)

DENSITY_TOL = 1e-8
LEAK_TOL = 1e-6


@dataclass(frozen=True)
class RnTolerances:
    """Tolerance policy for density verdicts.

    uncertainty is the noise half-width around the contraction threshold 1:
    when |lambda_max - 1| falls inside it the verdict is inconclusive rather
    than noise-certified.  Callers may leave it 0 for exact inputs.
    """

    psd_clip_tol: float = PSD_CLIP_TOL
    rank_tol: float = RANK_TOL
    density_tol: float = DENSITY_TOL
    leak_tol: float = LEAK_TOL
    uncertainty: float = 0.0

    def __post_init__(self) -> None:
        for name in ("psd_clip_tol", "rank_tol", "density_tol", "leak_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.uncertainty < 0:
            raise ValueError("uncertainty must be >= 0")


@dataclass(frozen=True)
class KolmogorovFactor:
    """Factorization G = V* V with V of shape (rank, n) spanning the retained range."""

    V: np.ndarray
    rank: int
    residual: float
    retained_eigenvalues: np.ndarray


@dataclass(frozen=True)
class DensityReport:
    """Radon-Nikodym density of G_K w.r.t. G_L in the retained eigenbasis of G_L.

    tolerances echoes the effective values the verdict was decided with (after
    any noise propagation), so every verdict is auditable.
    """

    density: np.ndarray
    eigenvalues: np.ndarray
    lambda_min: float
    lambda_max: float
    reconstruction_residual: float
    support_leak: float
    verdict: str  # dominated | not_dominated | inconclusive
    rank: int
    tolerances: RnTolerances

    @property
    def violation_margin(self) -> float:
        """How far the contraction bound is exceeded (lambda_max - 1)."""
        return self.lambda_max - 1.0


@dataclass(frozen=True)
class OrderTestResult:
    passes: bool
    min_eig_of_difference: float


def _clipped_eigh(G: np.ndarray, psd_clip_tol: float) -> tuple[np.ndarray, np.ndarray]:
    eig = hermitian_eig(G)
    vals = eig.eigenvalues
    if vals.size and float(vals[0]) < -psd_clip_tol:
        raise ValueError(
            f"matrix indefinite beyond clip tolerance ({vals[0]:.3e} < -{psd_clip_tol:.3e})"
        )
    return np.clip(vals, 0.0, None), eig.eigenvectors


def kolmogorov_factor(
    G: np.ndarray, rank_tol: float = RANK_TOL, psd_clip_tol: float = PSD_CLIP_TOL
) -> KolmogorovFactor:
    """Minimal factorization G = V* V from the retained eigenpairs of G."""
    vals, vecs = _clipped_eigh(G, psd_clip_tol)
    lam_max = float(vals[-1]) if vals.size else 0.0
    keep = vals > rank_tol * lam_max
    lam = vals[keep]
    U = vecs[:, keep]
    V = (np.sqrt(lam)[:, None]) * U.conj().T
    residual = frobenius(V.conj().T @ V - G) / (1.0 + frobenius(G))
    return KolmogorovFactor(
        V=V, rank=int(lam.size), residual=residual, retained_eigenvalues=lam
    )


def rn_density(
    G_K: np.ndarray,
    G_L: np.ndarray,
    tols: RnTolerances = RnTolerances(),
    noise: Optional[tuple[float, float]] = None,
) -> DensityReport:
    """Density of G_K with respect to G_L on the retained range of G_L.

    The verdict is `dominated` iff the spectrum sits in [-density_tol,
    1 + density_tol] and the mass of G_K outside range(G_L) is within
    leak_tol; `inconclusive` when lambda_max is within the uncertainty band
    of the threshold 1.

    noise, when given, carries operator-norm error scales (n_K, n_L) of the
    two Grams (already z-scaled by the caller).  First-order perturbation of
    an eigenvalue t of the density along eigenvector v is bounded by
    (n_K + |t| n_L) * ||u||^2 with u the Kolmogorov preimage of v, so the
    effective tolerance and the uncertainty band are scaled that way; the
    stored tolerances echo the effective values.
    """
    G_K = np.asarray(G_K, dtype=np.complex128)
    G_L = np.asarray(G_L, dtype=np.complex128)
    if G_K.shape != G_L.shape:
        raise ValueError(f"dimension mismatch: {G_K.shape} vs {G_L.shape}")
    _clipped_eigh(G_K, tols.psd_clip_tol)  # validate definiteness only

    vals, vecs = _clipped_eigh(G_L, tols.psd_clip_tol)
    lam_max = float(vals[-1]) if vals.size else 0.0
    keep = vals > tols.rank_tol * lam_max
    lam = vals[keep]
    U = vecs[:, keep]
    rank = int(lam.size)
    if rank == 0:
        raise ValueError("G_L is numerically zero; no density exists")

    inv_sqrt = 1.0 / np.sqrt(lam)
    compressed = U.conj().T @ G_K @ U
    density = (inv_sqrt[:, None] * compressed) * inv_sqrt[None, :]
    density = 0.5 * (density + density.conj().T)
    evals, evecs = np.linalg.eigh(density)
    lambda_min = float(evals[0])
    lambda_max = float(evals[-1])

    norm_k = frobenius(G_K)
    proj_K = U @ compressed @ U.conj().T
    # (I - P) G_K (I - P) = G_K - P G_K - G_K P + P G_K P
    PG = U @ (U.conj().T @ G_K)
    outside = G_K - PG - PG.conj().T + proj_K
    support_leak = frobenius(outside) / (1.0 + norm_k)
    sqrt_lam = np.sqrt(lam)
    recon = U @ ((sqrt_lam[:, None] * density) * sqrt_lam[None, :]) @ U.conj().T
    reconstruction_residual = frobenius(recon - G_K) / (1.0 + norm_k)

    density_tol = tols.density_tol
    uncertainty = tols.uncertainty
    if noise is not None:
        n_k, n_l = noise
        # ||u||^2 for the preimage of a density eigenvector: v* Lam^{-1} v
        scale_top = float(np.sum(np.abs(evecs[:, -1]) ** 2 / lam))
        scale_bot = float(np.sum(np.abs(evecs[:, 0]) ** 2 / lam))
        uncertainty = max(
            uncertainty, (n_k + max(abs(lambda_max), 1.0) * n_l) * scale_top
        )
        density_tol = max(
            density_tol, (n_k + max(abs(lambda_min), 1.0) * n_l) * scale_bot, uncertainty
        )
    eff = replace(tols, density_tol=density_tol, uncertainty=uncertainty)

    in_range = (
        lambda_min >= -eff.density_tol
        and lambda_max <= 1.0 + eff.density_tol
        and support_leak <= eff.leak_tol
    )
    if eff.uncertainty > 0 and abs(lambda_max - 1.0) < eff.uncertainty:
        verdict = "inconclusive"
    else:
        verdict = "dominated" if in_range else "not_dominated"

    return DensityReport(
        density=density,
        eigenvalues=evals,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
        reconstruction_residual=reconstruction_residual,
        support_leak=support_leak,
        verdict=verdict,
        rank=rank,
        tolerances=eff,
    )


def order_test(G: np.ndarray, G_sigma: np.ndarray, tol: float) -> OrderTestResult:
    """PSD verdict on G - G_sigma: the finite-section kernel order test."""
    if G.shape != G_sigma.shape:
        raise ValueError(f"dimension mismatch: {G.shape} vs {G_sigma.shape}")
    v = psd_verdict(G - G_sigma, tol)
    return OrderTestResult(passes=v.is_psd, min_eig_of_difference=v.min_eig)


@dataclass(frozen=True)
class ShiftAnalysis:
    """shift_density plus the order-test cross-check on the same Gram pair."""

    density: DensityReport
    order: OrderTestResult
    order_tol: float
    agreement: Optional[bool]  # None when the density verdict is inconclusive
    grams: GramPair


def _auto_tolerances(grams: GramPair, z: float) -> RnTolerances:
    return RnTolerances(
        psd_clip_tol=max(
            PSD_CLIP_TOL, z * max(grams.se_spectral, grams.se_spectral_sigma)
        ),
        rank_tol=RANK_TOL,
        density_tol=DENSITY_TOL,
        leak_tol=max(
            LEAK_TOL, z * grams.se_frob_sigma / (1.0 + frobenius(grams.G_sigma))
        ),
        uncertainty=0.0,
    )


def shift_analysis(
    K: KernelEstimate,
    b: Subalgebra,
    order: int,
    enforce: str = "none",
    tols: Optional[RnTolerances] = None,
    z: float = 3.0,
) -> ShiftAnalysis:
    """Run the density and order tests on the shifted/base Gram pair at `order`.

    With tols=None the tolerances are loosened to the Monte Carlo noise of the
    estimate and the density verdict gains an uncertainty band; explicit
    tolerances are used verbatim (exact-arithmetic callers).  The order test
    runs at density_tol scaled by the smallest retained eigenvalue of G, which
    ties the two verdicts' tolerances together.
    """
    if tols is None:
        # first assembly only measures the noise scale; the real clip check
        # runs once the tolerance is known
        grams = sigma_grams(K, order, b, enforce, psd_clip_tol=np.inf)
        tols = _auto_tolerances(grams, z)
        grams = sigma_grams(K, order, b, enforce, psd_clip_tol=tols.psd_clip_tol)
        noise = (z * grams.se_spectral_sigma, z * grams.se_spectral)
    else:
        grams = sigma_grams(K, order, b, enforce, psd_clip_tol=tols.psd_clip_tol)
        noise = None
    density = rn_density(grams.G_sigma, grams.G, tols, noise)

    vals = np.linalg.eigvalsh(grams.G)
    lam_max = float(vals[-1]) if vals.size else 0.0
    retained = vals[vals > tols.rank_tol * lam_max]
    lam_min_ret = float(retained[0]) if retained.size else 1.0
    order_tol = density.tolerances.density_tol * lam_min_ret
    ot = order_test(grams.G, grams.G_sigma, order_tol)
    agreement = (
        None
        if density.verdict == "inconclusive"
        else (density.verdict == "dominated") == ot.passes
    )
    return ShiftAnalysis(
        density=density, order=ot, order_tol=order_tol, agreement=agreement, grams=grams
    )


def shift_density(
    K: KernelEstimate,
    b: Subalgebra,
    order: int,
    enforce: str = "none",
    tols: Optional[RnTolerances] = None,
    z: float = 3.0,
) -> DensityReport:
    """Density of the level-shifted Gram w.r.t. the base Gram at the given order.

    A `dominated` verdict is the finite-section content of the shifted kernel
    being dominated by the kernel itself; its spectrum consists of moment
    ratios for bi-unitarily enforced models.
    """
    return shift_analysis(K, b, order, enforce, tols, z).density
