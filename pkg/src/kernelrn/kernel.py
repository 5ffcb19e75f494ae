"""Moment kernel estimation, conditional expectations, and Gram assembly.

The moment kernel of a random d-tuple A is K(a, b) = E[A^a (A^b)*] over words
a, b.  We estimate it by Monte Carlo up to a word-length cutoff, compress with
a conditional expectation onto a subalgebra (full / diagonal / block-diagonal
/ scalar), and assemble truncated Gram matrices, optionally enforcing the
structure that phase / bi-unitary / block-unitary invariance gives the exact
kernel in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kernelrn import _accel, _mc
from kernelrn.ensembles import (
    BlockGinibre,
    EnsembleSpec,
    SampleIdentity,
    dim,
    is_unitary_ensemble,
    n_generators,
    phase_invariant,
    sample,
)
from kernelrn.numerics import PSD_CLIP_TOL, hermitian_eig
from kernelrn.words import DEFAULT_WORD_CAP, Word, enumerate_words

ENFORCE_MODES = ("none", "phase", "biunitary", "block")


class NoisyEstimateError(ValueError):
    """The assembled Gram is indefinite beyond the clip tolerance; raise S."""


@dataclass(frozen=True)
class Subalgebra:
    """Target of the conditional expectation: full / diagonal / blocks / scalar."""

    kind: str
    sizes: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in ("full", "diagonal", "blocks", "scalar"):
            raise ValueError(f"unknown subalgebra kind {self.kind!r}")
        if self.kind == "blocks":
            if not self.sizes or any(k < 1 for k in self.sizes):
                raise ValueError("blocks subalgebra needs positive sizes")
            object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))
        elif self.sizes is not None:
            raise ValueError(f"sizes only apply to kind='blocks', not {self.kind!r}")

    @classmethod
    def full(cls) -> "Subalgebra":
        return cls("full")

    @classmethod
    def diagonal(cls) -> "Subalgebra":
        return cls("diagonal")

    @classmethod
    def blocks(cls, sizes) -> "Subalgebra":
        return cls("blocks", tuple(sizes))

    @classmethod
    def scalar(cls) -> "Subalgebra":
        return cls("scalar")


def block_offsets(sizes: tuple[int, ...]) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)


def conditional_expectation(X: np.ndarray, b: Subalgebra) -> np.ndarray:
    """Compression of X onto the subalgebra: unital, positive, idempotent, bimodular."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    N = X.shape[0]
    if b.kind == "full":
        return X.copy()
    if b.kind == "diagonal":
        return np.diag(np.diag(X))
    if b.kind == "scalar":
        return (np.trace(X) / N) * np.eye(N, dtype=np.complex128)
    assert b.sizes is not None
    if sum(b.sizes) != N:
        raise ValueError(f"block sizes {b.sizes} do not sum to matrix size {N}")
    out = np.zeros_like(X)
    offs = block_offsets(b.sizes)
    for r in range(len(b.sizes)):
        lo, hi = offs[r], offs[r + 1]
        out[lo:hi, lo:hi] = X[lo:hi, lo:hi]
    return out


@dataclass
class KernelEstimate:
    """Monte Carlo estimate of the moment kernel up to a word-length cutoff.

    blocks maps (a, b) to the averaged A^a (A^b)* and satisfies
    blocks[(a, b)] == blocks[(b, a)]* exactly.  se is the Frobenius norm of the
    entrywise standard errors of the mean.  diag_scalar_* hold the per-sample
    population statistics of (1/N) Tr K(a, a); block_scalar_* the per-block
    analogue when block sizes were supplied at estimation time.
    """

    d: int
    max_len: int
    samples: int
    seed: int
    n: int
    words: list[Word]
    blocks: dict[tuple[Word, Word], np.ndarray]
    se: dict[tuple[Word, Word], float]
    diag_scalar_mean: dict[Word, float]
    diag_scalar_se: dict[Word, float]
    spec: EnsembleSpec
    phase_invariant: bool
    backend: str
    block_sizes: Optional[tuple[int, ...]] = None
    block_scalar_mean: dict[Word, np.ndarray] = field(default_factory=dict)
    block_scalar_se: dict[Word, np.ndarray] = field(default_factory=dict)


def _word_prefix_tables(words: list[Word]) -> tuple[np.ndarray, np.ndarray]:
    index = {w: t for t, w in enumerate(words)}
    prefix = np.zeros(len(words), dtype=np.int64)
    last = np.zeros(len(words), dtype=np.int64)
    for t, w in enumerate(words):
        if len(w) == 0:
            continue
        prefix[t] = index[Word(w.letters[:-1])]
        last[t] = w.letters[-1]
    return prefix, last


def _se_from_sums(total: np.ndarray, total_sq: np.ndarray, S: int) -> float:
    """Frobenius aggregate of entrywise standard errors of a complex mean."""
    if S < 2:
        return 0.0
    mean = total / S
    var = (total_sq - S * (mean.real**2 + mean.imag**2)) / (S - 1)
    np.clip(var, 0.0, None, out=var)
    return float(np.sqrt(var.sum() / S))


def _scalar_stats(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of a per-sample scalar population."""
    S = values.shape[0]
    m = float(values.mean())
    if S < 2:
        return m, 0.0
    return m, float(values.std(ddof=1) / np.sqrt(S))


def estimate_kernel(
    spec: EnsembleSpec,
    max_len: int,
    samples: int,
    seed: int,
    workers: int = 1,
    block_sizes: Optional[tuple[int, ...]] = None,
    cap: int = DEFAULT_WORD_CAP,
) -> KernelEstimate:
    """Monte Carlo estimate K(a, b) = (1/S) sum_s A_s^a (A_s^b)* for |a|,|b| <= max_len.

    Word powers multiply letters left to right with A^{empty} = I.  Pair blocks
    are stored for both orders with exact adjoint symmetry.  For unitary
    ensembles the per-sample identity A^m (A^n)* = A^{m-n} is used, which makes
    the diagonal blocks exactly the identity.

    Callers that need the shifted kernel to order M must pass max_len = M + 1.
    """
    if samples < 1:
        raise ValueError(f"need samples >= 1, got {samples}")
    if max_len < 0:
        raise ValueError(f"need max_len >= 0, got {max_len}")
    d = n_generators(spec)
    N = dim(spec)
    words = enumerate_words(d, max_len, cap)
    if block_sizes is None and isinstance(spec, BlockGinibre):
        block_sizes = spec.sizes
    if block_sizes is not None and sum(block_sizes) != N:
        raise ValueError(f"block sizes {block_sizes} do not sum to n={N}")

    if is_unitary_ensemble(spec) and d == 1:
        return _estimate_kernel_unitary(spec, max_len, samples, seed, workers, block_sizes, words)

    backend = _accel.get_backend()
    offsets = block_offsets(block_sizes) if block_sizes else np.array([0, N], dtype=np.int64)
    R = offsets.shape[0] - 1
    W = len(words)
    n_pairs = W * (W + 1) // 2
    prefix, last = _word_prefix_tables(words)

    diag_samples = np.zeros((samples, W))
    block_samples = np.zeros((samples, W, R))
    bad = np.full(len(_mc.chunk_ranges(samples)), -1, dtype=np.int64)

    def one_chunk(lo: int, hi: int):
        sums = np.zeros((n_pairs, N, N), dtype=np.complex128)
        sumsq = np.zeros((n_pairs, N, N))
        diag_buf = np.zeros(W)
        block_buf = np.zeros((W, R))
        for s in range(lo, hi):
            mats = sample(spec, SampleIdentity(seed, s))
            if d == 1:
                powers = backend.matrix_powers(mats[0], max_len)
            else:
                powers = np.empty((W, N, N), dtype=np.complex128)
                powers[0] = np.eye(N)
                for t in range(1, W):
                    powers[t] = powers[prefix[t]] @ mats[last[t] - 1]
            ok = backend.pair_accumulate(powers, sums, sumsq, diag_buf, block_buf, offsets)
            if not ok:
                bad[lo // _mc.CHUNK_SIZE] = s
                return sums, sumsq
            diag_samples[s] = diag_buf / N
            block_samples[s] = block_buf / np.diff(offsets)
        return sums, sumsq

    partials = _mc.map_chunks(one_chunk, samples, workers)
    if (bad >= 0).any():
        raise ValueError(
            f"non-finite word power product at sample index {int(bad[bad >= 0].min())}"
        )
    sums = np.zeros((n_pairs, N, N), dtype=np.complex128)
    sumsq = np.zeros((n_pairs, N, N))
    for ps, pq in partials:
        sums += ps
        sumsq += pq

    blocks: dict[tuple[Word, Word], np.ndarray] = {}
    se: dict[tuple[Word, Word], float] = {}
    p = 0
    for i in range(W):
        for j in range(i, W):
            mean = sums[p] / samples
            if i == j:
                mean = 0.5 * (mean + mean.conj().T)
            s_pair = _se_from_sums(sums[p], sumsq[p], samples)
            blocks[(words[i], words[j])] = mean
            se[(words[i], words[j])] = s_pair
            if i != j:
                blocks[(words[j], words[i])] = mean.conj().T
                se[(words[j], words[i])] = s_pair
            p += 1

    diag_mean: dict[Word, float] = {}
    diag_se: dict[Word, float] = {}
    blk_mean: dict[Word, np.ndarray] = {}
    blk_se: dict[Word, np.ndarray] = {}
    for t, w in enumerate(words):
        m, s_ = _scalar_stats(diag_samples[:, t])
        diag_mean[w], diag_se[w] = m, s_
        if block_sizes is not None:
            ms = np.empty(R)
            ss = np.empty(R)
            for r in range(R):
                ms[r], ss[r] = _scalar_stats(block_samples[:, t, r])
            blk_mean[w], blk_se[w] = ms, ss

    return KernelEstimate(
        d=d,
        max_len=max_len,
        samples=samples,
        seed=seed,
        n=N,
        words=words,
        blocks=blocks,
        se=se,
        diag_scalar_mean=diag_mean,
        diag_scalar_se=diag_se,
        spec=spec,
        phase_invariant=phase_invariant(spec),
        backend=backend.name,
        block_sizes=tuple(block_sizes) if block_sizes else None,
        block_scalar_mean=blk_mean,
        block_scalar_se=blk_se,
    )


def _estimate_kernel_unitary(
    spec, max_len, samples, seed, workers, block_sizes, words
) -> KernelEstimate:
    # For unitary A, A^m (A^n)* = A^{m-n} per sample, so only the Monte Carlo
    # means of U^k (k = 1..max_len) are random; k = 0 is the identity exactly.
    N = dim(spec)
    L = max_len

    def one_chunk(lo: int, hi: int):
        sums = np.zeros((L + 1, N, N), dtype=np.complex128)
        sumsq = np.zeros((L + 1, N, N))
        for s in range(lo, hi):
            U = sample(spec, SampleIdentity(seed, s))[0]
            P = U.copy()
            for k in range(1, L + 1):
                sums[k] += P
                sumsq[k] += P.real**2 + P.imag**2
                if k < L:
                    P = P @ U
        return sums, sumsq

    partials = _mc.map_chunks(one_chunk, samples, workers)
    sums = np.zeros((L + 1, N, N), dtype=np.complex128)
    sumsq = np.zeros((L + 1, N, N))
    for ps, pq in partials:
        sums += ps
        sumsq += pq

    eye = np.eye(N, dtype=np.complex128)
    power_mean = [eye] + [sums[k] / samples for k in range(1, L + 1)]
    power_se = [0.0] + [_se_from_sums(sums[k], sumsq[k], samples) for k in range(1, L + 1)]

    blocks: dict[tuple[Word, Word], np.ndarray] = {}
    se: dict[tuple[Word, Word], float] = {}
    for m in range(L + 1):
        for n_ in range(L + 1):
            k = m - n_
            blocks[(words[m], words[n_])] = (
                power_mean[k].copy() if k >= 0 else power_mean[-k].conj().T
            )
            se[(words[m], words[n_])] = power_se[abs(k)]

    diag_mean = {w: 1.0 for w in words}
    diag_se = {w: 0.0 for w in words}
    blk_mean: dict[Word, np.ndarray] = {}
    blk_se: dict[Word, np.ndarray] = {}
    if block_sizes is not None:
        R = len(block_sizes)
        for w in words:
            blk_mean[w] = np.ones(R)
            blk_se[w] = np.zeros(R)

    return KernelEstimate(
        d=1,
        max_len=max_len,
        samples=samples,
        seed=seed,
        n=N,
        words=words,
        blocks=blocks,
        se=se,
        diag_scalar_mean=diag_mean,
        diag_scalar_se=diag_se,
        spec=spec,
        phase_invariant=True,
        backend=_accel.active_backend_name(),
        block_sizes=tuple(block_sizes) if block_sizes else None,
        block_scalar_mean=blk_mean,
        block_scalar_se=blk_se,
    )


def shifted_kernel(
    K: KernelEstimate, b: Subalgebra
) -> dict[tuple[Word, Word], np.ndarray]:
    """Level-raised kernel sum_i E_B(K(a i, b i)) for |a|, |b| <= max_len - 1."""
    if K.max_len < 1:
        raise ValueError("shifted kernel needs max_len >= 1")
    out: dict[tuple[Word, Word], np.ndarray] = {}
    inner = [w for w in K.words if len(w) <= K.max_len - 1]
    for wa in inner:
        for wb in inner:
            acc = np.zeros((K.n, K.n), dtype=np.complex128)
            for i in range(1, K.d + 1):
                acc += conditional_expectation(K.blocks[(wa.append(i), wb.append(i))], b)
            out[(wa, wb)] = acc
    return out


def _scalarize(blk: np.ndarray) -> np.ndarray:
    N = blk.shape[0]
    return (np.trace(blk).real / N) * np.eye(N, dtype=np.complex128)


def _scalarize_blocks(blk: np.ndarray, sizes: tuple[int, ...]) -> np.ndarray:
    out = np.zeros_like(blk)
    offs = block_offsets(sizes)
    for r in range(len(sizes)):
        lo, hi = offs[r], offs[r + 1]
        c = np.trace(blk[lo:hi, lo:hi]).real / sizes[r]
        out[lo:hi, lo:hi] = c * np.eye(sizes[r], dtype=np.complex128)
    return out


def _check_enforce(K: KernelEstimate, b: Subalgebra, enforce: str) -> None:
    if enforce not in ENFORCE_MODES:
        raise ValueError(f"unknown enforce mode {enforce!r}; one of {ENFORCE_MODES}")
    if enforce != "none" and not K.phase_invariant:
        raise ValueError(
            f"enforce={enforce!r} requires a phase-invariant ensemble; "
            f"{type(K.spec).__name__} is not"
        )
    if enforce == "block" and b.kind != "blocks":
        raise ValueError("enforce='block' requires a blocks subalgebra")


def enforced_block(
    K: KernelEstimate, wa: Word, wb: Word, b: Subalgebra, enforce: str
) -> np.ndarray:
    """E_B-compressed kernel block with the requested invariance enforcement."""
    if enforce != "none" and len(wa) != len(wb):
        return np.zeros((K.n, K.n), dtype=np.complex128)
    blk = K.blocks[(wa, wb)]
    if enforce == "biunitary" and wa == wb:
        return _scalarize(blk)
    if enforce == "block" and wa == wb:
        assert b.sizes is not None
        return _scalarize_blocks(blk, b.sizes)
    return conditional_expectation(blk, b)


def _enforced_pair_se(
    K: KernelEstimate, wa: Word, wb: Word, b: Subalgebra, enforce: str, spectral: bool
) -> float:
    """Monte Carlo error scale of one enforced block.

    Frobenius flavor aggregates the entrywise SEs; the spectral flavor models
    the operator norm instead: a scalarized diagonal block perturbs by a
    multiple of the identity (the trace SE), and a dense noise block of
    Frobenius size s has operator norm around 2 s / sqrt(N).
    """
    if enforce != "none" and len(wa) != len(wb):
        return 0.0
    if enforce == "biunitary" and wa == wb:
        s = K.diag_scalar_se[wa]
        return s if spectral else float(np.sqrt(K.n) * s)
    if enforce == "block" and wa == wb and K.block_scalar_se and wa in K.block_scalar_se:
        assert b.sizes is not None
        ses = K.block_scalar_se[wa]
        if spectral:
            return float(np.max(ses))
        return float(np.sqrt(sum(k * s**2 for k, s in zip(b.sizes, ses))))
    s = K.se[(wa, wb)]
    return 2.0 * s / np.sqrt(K.n) if spectral else s


def _pair_se(
    K: KernelEstimate, wa: Word, wb: Word, b: Subalgebra, enforce: str,
    shifted: bool, spectral: bool,
) -> float:
    if not shifted:
        return _enforced_pair_se(K, wa, wb, b, enforce, spectral)
    s2 = 0.0
    for g in range(1, K.d + 1):
        s2 += _enforced_pair_se(K, wa.append(g), wb.append(g), b, enforce, spectral) ** 2
    return float(np.sqrt(s2))


def gram_se(
    K: KernelEstimate, order: int, b: Subalgebra, enforce: str, shifted: bool = False
) -> float:
    """Frobenius aggregate of the Monte Carlo error of the assembled Gram."""
    words = [w for w in K.words if len(w) <= order]
    total = 0.0
    for i, wa in enumerate(words):
        for j, wb in enumerate(words):
            if j < i:
                continue
            s2 = _pair_se(K, wa, wb, b, enforce, shifted, spectral=False) ** 2
            total += s2 if i == j else 2.0 * s2
    return float(np.sqrt(total))


def gram_se_spectral(
    K: KernelEstimate, order: int, b: Subalgebra, enforce: str, shifted: bool = False
) -> float:
    """Operator-norm scale of the Gram error: max block row sum of pair scales."""
    words = [w for w in K.words if len(w) <= order]
    worst = 0.0
    for wa in words:
        row = sum(
            _pair_se(K, wa, wb, b, enforce, shifted, spectral=True) for wb in words
        )
        worst = max(worst, row)
    return float(worst)


def _assemble(
    K: KernelEstimate, order: int, b: Subalgebra, enforce: str, shifted: bool
) -> np.ndarray:
    words = [w for w in K.words if len(w) <= order]
    W, N = len(words), K.n
    G = np.zeros((W * N, W * N), dtype=np.complex128)
    for i, wa in enumerate(words):
        for j, wb in enumerate(words):
            if j < i:
                continue
            if shifted:
                blk = np.zeros((N, N), dtype=np.complex128)
                for g in range(1, K.d + 1):
                    blk += enforced_block(K, wa.append(g), wb.append(g), b, enforce)
            else:
                blk = enforced_block(K, wa, wb, b, enforce)
            G[i * N:(i + 1) * N, j * N:(j + 1) * N] = blk
            if j > i:
                G[j * N:(j + 1) * N, i * N:(i + 1) * N] = blk.conj().T
    return G


def _clip_check(G: np.ndarray, psd_clip_tol: float) -> np.ndarray:
    eig = hermitian_eig(G)
    min_eig = float(eig.eigenvalues[0])
    if min_eig < -psd_clip_tol:
        raise NoisyEstimateError(
            f"assembled Gram indefinite: min eigenvalue {min_eig:.3e} < "
            f"-{psd_clip_tol:.3e}; increase the sample count"
        )
    if min_eig >= 0.0:
        return G
    vals = np.clip(eig.eigenvalues, 0.0, None)
    out = (eig.eigenvectors * vals) @ eig.eigenvectors.conj().T
    return 0.5 * (out + out.conj().T)


def assemble_gram(
    K: KernelEstimate,
    order: int,
    b: Subalgebra,
    enforce: str = "none",
    psd_clip_tol: float = PSD_CLIP_TOL,
) -> np.ndarray:
    """Truncated Gram matrix [E_B K(a, b)] over words of length <= order.

    enforce='phase' zeroes blocks of unequal word length; 'biunitary'
    additionally replaces diagonal blocks by their normalized trace times the
    identity; 'block' does that per diagonal block of the subalgebra.
    Eigenvalues in (-psd_clip_tol, 0) are clipped to zero; below that the
    estimate is too noisy and NoisyEstimateError is raised.
    """
    if order > K.max_len:
        raise ValueError(f"order {order} exceeds estimated max_len {K.max_len}")
    _check_enforce(K, b, enforce)
    G = _assemble(K, order, b, enforce, shifted=False)
    return _clip_check(G, psd_clip_tol)


@dataclass(frozen=True)
class GramPair:
    """Assembled Gram G with its level-shifted companion and error aggregates."""

    G: np.ndarray
    G_sigma: np.ndarray
    se_frob: float
    se_frob_sigma: float
    se_spectral: float
    se_spectral_sigma: float


def sigma_grams(
    K: KernelEstimate,
    order: int,
    b: Subalgebra,
    enforce: str = "none",
    psd_clip_tol: float = PSD_CLIP_TOL,
) -> GramPair:
    """Gram pair (G, G_sigma) at the given order plus their SE aggregates.

    G_sigma(a, b) = sum_i enforced E_B K(a i, b i); needs max_len >= order + 1.
    """
    if order + 1 > K.max_len:
        raise ValueError(
            f"shifted Gram at order {order} needs max_len >= {order + 1}, "
            f"estimate has {K.max_len}"
        )
    _check_enforce(K, b, enforce)
    G = _assemble(K, order, b, enforce, shifted=False)
    GS = _assemble(K, order, b, enforce, shifted=True)
    return GramPair(
        G=_clip_check(G, psd_clip_tol),
        G_sigma=_clip_check(GS, psd_clip_tol),
        se_frob=gram_se(K, order, b, enforce, shifted=False),
        se_frob_sigma=gram_se(K, order, b, enforce, shifted=True),
        se_spectral=gram_se_spectral(K, order, b, enforce, shifted=False),
        se_spectral_sigma=gram_se_spectral(K, order, b, enforce, shifted=True),
    )
