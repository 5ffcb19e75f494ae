"""Hot per-sample accumulation kernels: numba implementations, numpy fallback.

The backend is chosen per call from the environment variable
``KERNELRN_BACKEND`` ("numba" or "numpy"); unset means numba when importable.
Both backends implement the same operations with the same accumulation order,
so results agree to floating round-off; within one backend results are
bitwise deterministic.

benchmarks/bench_backends.py times the two paths against each other.
"""

from __future__ import annotations

import os
from typing import Callable, NamedTuple

import numpy as np


class Backend(NamedTuple):
    name: str
    matrix_powers: Callable
    pair_accumulate: Callable
    c_values: Callable
    block_values: Callable
    d_values: Callable


# ---------------------------------------------------------------------------
# numpy fallback


def _matrix_powers_np(A: np.ndarray, L: int) -> np.ndarray:
    N = A.shape[0]
    P = np.empty((L + 1, N, N), dtype=np.complex128)
    P[0] = np.eye(N)
    for k in range(1, L + 1):
        P[k] = P[k - 1] @ A
    return P


def _pair_accumulate_np(P, sums, sumsq, diag_traces, block_traces, offsets) -> bool:
    L1 = P.shape[0]
    ok = True
    p = 0
    for i in range(L1):
        for j in range(i, L1):
            C = P[i] @ P[j].conj().T
            if not np.all(np.isfinite(C.real)) or not np.all(np.isfinite(C.imag)):
                ok = False
            sums[p] += C
            sumsq[p] += C.real * C.real + C.imag * C.imag
            if i == j:
                dd = np.real(np.diagonal(C))
                diag_traces[i] = float(dd.sum())
                for r in range(offsets.shape[0] - 1):
                    block_traces[i, r] = float(dd[offsets[r]:offsets[r + 1]].sum())
            p += 1
    return ok


def _c_values_np(P: np.ndarray) -> np.ndarray:
    # c_m per sample: ||A^m||_F^2 / N
    N = P.shape[1]
    return (P.real * P.real + P.imag * P.imag).sum(axis=(1, 2)) / N


def _block_values_np(P: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    # per-level, per-block normalized row-energy of A^m
    L1, N = P.shape[0], P.shape[1]
    R = offsets.shape[0] - 1
    rows = (P.real * P.real + P.imag * P.imag).sum(axis=2)
    out = np.empty((L1, R))
    for r in range(R):
        k_r = offsets[r + 1] - offsets[r]
        out[:, r] = rows[:, offsets[r]:offsets[r + 1]].sum(axis=1) / k_r
    return out


def _d_values_np(A: np.ndarray, M: int) -> np.ndarray:
    # d_m per sample: (1/N) Tr((A* A)^m)
    N = A.shape[0]
    Q = A.conj().T @ A
    out = np.empty(M + 1)
    out[0] = 1.0
    R = np.eye(N, dtype=np.complex128)
    for m in range(1, M + 1):
        R = R @ Q
        out[m] = np.trace(R).real / N
    return out


_NUMPY_BACKEND = Backend(
    name="numpy",
    matrix_powers=_matrix_powers_np,
    pair_accumulate=_pair_accumulate_np,
    c_values=_c_values_np,
    block_values=_block_values_np,
    d_values=_d_values_np,
)

_BACKENDS: dict[str, Backend] = {"numpy": _NUMPY_BACKEND}


# ---------------------------------------------------------------------------
# numba kernels

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _matrix_powers_nb(A, L):
        N = A.shape[0]
        P = np.zeros((L + 1, N, N), dtype=np.complex128)
        for i in range(N):
            P[0, i, i] = 1.0
        for k in range(1, L + 1):
            P[k] = np.dot(np.ascontiguousarray(P[k - 1]), A)
        return P

    @njit(cache=True, nogil=True)
    def _pair_accumulate_nb(P, sums, sumsq, diag_traces, block_traces, offsets):
        L1 = P.shape[0]
        N = P.shape[1]
        R = offsets.shape[0] - 1
        ok = True
        p = 0
        for i in range(L1):
            for j in range(i, L1):
                Qt = np.ascontiguousarray(np.conj(P[j]).T)
                C = np.dot(np.ascontiguousarray(P[i]), Qt)
                for a in range(N):
                    for b in range(N):
                        z = C[a, b]
                        re = z.real
                        im = z.imag
                        if not (np.isfinite(re) and np.isfinite(im)):
                            ok = False
                        sums[p, a, b] += z
                        sumsq[p, a, b] += re * re + im * im
                if i == j:
                    t = 0.0
                    for a in range(N):
                        t += C[a, a].real
                    diag_traces[i] = t
                    for r in range(R):
                        tb = 0.0
                        for a in range(offsets[r], offsets[r + 1]):
                            tb += C[a, a].real
                        block_traces[i, r] = tb
                p += 1
        return ok

    @njit(cache=True, nogil=True)
    def _c_values_nb(P):
        L1 = P.shape[0]
        N = P.shape[1]
        out = np.empty(L1)
        for m in range(L1):
            s = 0.0
            for a in range(N):
                for b in range(N):
                    z = P[m, a, b]
                    s += z.real * z.real + z.imag * z.imag
            out[m] = s / N
        return out

    @njit(cache=True, nogil=True)
    def _block_values_nb(P, offsets):
        L1 = P.shape[0]
        N = P.shape[1]
        R = offsets.shape[0] - 1
        out = np.empty((L1, R))
        for m in range(L1):
            for r in range(R):
                s = 0.0
                for a in range(offsets[r], offsets[r + 1]):
                    for b in range(N):
                        z = P[m, a, b]
                        s += z.real * z.real + z.imag * z.imag
                out[m, r] = s / (offsets[r + 1] - offsets[r])
        return out

    @njit(cache=True, nogil=True)
    def _d_values_nb(A, M):
        N = A.shape[0]
        Q = np.dot(np.ascontiguousarray(np.conj(A).T), A)
        out = np.empty(M + 1)
        out[0] = 1.0
        R = np.zeros((N, N), dtype=np.complex128)
        for i in range(N):
            R[i, i] = 1.0
        for m in range(1, M + 1):
            R = np.dot(R, Q)
            t = 0.0
            for i in range(N):
                t += R[i, i].real
            out[m] = t / N
        return out

    _BACKENDS["numba"] = Backend(
        name="numba",
        matrix_powers=_matrix_powers_nb,
        pair_accumulate=_pair_accumulate_nb,
        c_values=_c_values_nb,
        block_values=_block_values_nb,
        d_values=_d_values_nb,
    )


ENV_VAR = "KERNELRN_BACKEND"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str | None = None) -> Backend:
    """Resolve a backend by name, or from KERNELRN_BACKEND / availability."""
    if name is None:
        name = os.environ.get(ENV_VAR)
    if name is None:
        name = "numba" if "numba" in _BACKENDS else "numpy"
    name = name.lower()
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        )
    return _BACKENDS[name]


def active_backend_name() -> str:
    return get_backend().name
