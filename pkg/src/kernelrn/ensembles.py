"""Seed-reproducible samplers for the random matrix ensembles under test.

Every sampler draws from a counter-based Philox stream keyed by
(seed, sample_index), so the matrix produced for a given index is bitwise
identical no matter how samples are distributed over workers or in what order
they are requested.

Complex Gaussian convention: variance sigma2 means E|a|^2 = sigma2, with real
and imaginary parts each of variance sigma2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


class SampleIdentity(NamedTuple):
    seed: int
    sample_index: int


@dataclass(frozen=True)
class Ginibre:
    """i.i.d. complex Gaussian entries with variance tau / n."""

    n: int
    tau: float

    def __post_init__(self) -> None:
        _check_dim(self.n)
        _check_variance(self.tau, "tau")


@dataclass(frozen=True)
class GinibreRaw:
    """i.i.d. complex Gaussian entries with explicit per-entry variance sigma2."""

    n: int
    sigma2: float

    def __post_init__(self) -> None:
        _check_dim(self.n)
        _check_variance(self.sigma2, "sigma2")


@dataclass(frozen=True)
class HaarUnitary:
    n: int

    def __post_init__(self) -> None:
        _check_dim(self.n)


@dataclass(frozen=True)
class BlockGinibre:
    """Independent complex Gaussian entries with a block variance profile.

    Entry (i, j) with i in block r and j in block s has variance
    tau[r][s] / N where N = sum(sizes).
    """

    sizes: tuple[int, ...]
    tau: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))
        object.__setattr__(
            self, "tau", tuple(tuple(float(t) for t in row) for row in self.tau)
        )
        if not self.sizes:
            raise ValueError("BlockGinibre needs at least one block")
        for k in self.sizes:
            _check_dim(k)
        R = len(self.sizes)
        if len(self.tau) != R or any(len(row) != R for row in self.tau):
            raise ValueError(
                f"tau must be a {R}x{R} matrix matching len(sizes)={R}"
            )
        for row in self.tau:
            for t in row:
                _check_variance(t, "tau entry")

    @property
    def n(self) -> int:
        return sum(self.sizes)


@dataclass(frozen=True)
class GinibreTuple:
    """d independent Ginibre matrices, each with entry variance tau / n."""

    d: int
    n: int
    tau: float

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"need d >= 1, got {self.d}")
        _check_dim(self.n)
        _check_variance(self.tau, "tau")


@dataclass(frozen=True, eq=False)
class Deterministic:
    """Fixed d-tuple of matrices; every sample returns the stored tuple (testing hook)."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        mats = tuple(np.array(m, dtype=np.complex128) for m in self.matrices)
        if not mats:
            raise ValueError("Deterministic needs at least one matrix")
        n = mats[0].shape[0]
        for m in mats:
            if m.ndim != 2 or m.shape != (n, n):
                raise ValueError("Deterministic matrices must be square and same-sized")
            if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
                raise ValueError("Deterministic matrices must be finite")
            m.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def d(self) -> int:
        return len(self.matrices)


EnsembleSpec = Union[
    Ginibre, GinibreRaw, HaarUnitary, BlockGinibre, GinibreTuple, Deterministic
]


def _check_dim(n: int) -> None:
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")


def _check_variance(v: float, name: str) -> None:
    if not np.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {v}")


def dim(spec: EnsembleSpec) -> int:
    return spec.n


def n_generators(spec: EnsembleSpec) -> int:
    """Number of generators d in the tuple the spec samples."""
    if isinstance(spec, GinibreTuple):
        return spec.d
    if isinstance(spec, Deterministic):
        return spec.d
    return 1


def phase_invariant(spec: EnsembleSpec) -> bool:
    """Whether the law is invariant under A -> exp(i theta) A (all Gaussian and Haar variants)."""
    return not isinstance(spec, Deterministic)


def is_unitary_ensemble(spec: EnsembleSpec) -> bool:
    """Whether every sample is exactly unitary, so A^m (A^m)* = I holds per sample."""
    return isinstance(spec, HaarUnitary)


def substream(seed: int, sample_index: int) -> np.random.Generator:
    """Counter-based per-sample stream; depends only on (seed, sample_index)."""
    if sample_index < 0:
        raise ValueError(f"sample_index must be >= 0, got {sample_index}")
    key = np.array([seed & _MASK64, sample_index & _MASK64], dtype=_U64)
    return np.random.Generator(np.random.Philox(key=key))


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, int], variance: float) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def _haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    # QR of a Ginibre sample; dividing out the phases of R's diagonal makes the
    # factorization unique and the Q factor exactly Haar-distributed.
    G = _complex_gaussian(rng, (n, n), 1.0)
    Q, R = np.linalg.qr(G)
    diag = np.diagonal(R).copy()
    diag[diag == 0] = 1.0
    return Q * (diag / np.abs(diag))


def sample(spec: EnsembleSpec, ident: SampleIdentity) -> list[np.ndarray]:
    """Draw the d-tuple of matrices for one sample index (d = 1 for scalar specs)."""
    if isinstance(spec, Deterministic):
        return [m.copy() for m in spec.matrices]
    rng = substream(ident.seed, ident.sample_index)
    if isinstance(spec, Ginibre):
        return [_complex_gaussian(rng, (spec.n, spec.n), spec.tau / spec.n)]
    if isinstance(spec, GinibreRaw):
        return [_complex_gaussian(rng, (spec.n, spec.n), spec.sigma2)]
    if isinstance(spec, HaarUnitary):
        return [_haar_unitary(rng, spec.n)]
    if isinstance(spec, BlockGinibre):
        N = spec.n
        scale = np.empty((N, N))
        offs = np.cumsum((0,) + spec.sizes)
        for r in range(len(spec.sizes)):
            for s in range(len(spec.sizes)):
                scale[offs[r]:offs[r + 1], offs[s]:offs[s + 1]] = np.sqrt(
                    spec.tau[r][s] / (2.0 * N)
                )
        re = rng.standard_normal((N, N))
        im = rng.standard_normal((N, N))
        return [scale * (re + 1j * im)]
    if isinstance(spec, GinibreTuple):
        var = spec.tau / spec.n
        return [
            _complex_gaussian(rng, (spec.n, spec.n), var) for _ in range(spec.d)
        ]
    raise TypeError(f"unknown ensemble spec {type(spec).__name__}")
