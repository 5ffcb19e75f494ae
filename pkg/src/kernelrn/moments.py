"""Normalized moment sequences, ratio threshold tests, and analytic references.

c_m is the normalized trace of E[A^m (A^m)*]; d_m the normalized trace of
E[(A* A)^m]; block variants compress to the diagonal blocks first.  The ratio
test c_{m+1} <= c_m (per block where applicable) is the scalar form of the
shifted-kernel domination criterion for (block-)bi-unitarily invariant
ensembles.  Reference values: Catalan and Fuss-Catalan numbers and the
Marchenko-Pastur moment polynomials, all in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Optional

import numpy as np

from kernelrn import _accel, _mc
from kernelrn.ensembles import (
    EnsembleSpec,
    SampleIdentity,
    dim,
    is_unitary_ensemble,
    n_generators,
    sample,
)
from kernelrn.kernel import block_offsets

CATALAN_CAP = 10_000
FUSS_CAP = 200_000


@dataclass
class MomentSequence:
    """Monte Carlo moment sequence values[m], m = 0..M, with standard errors.

    kind is 'c', 'd', or 'c_block' (block_index set); per_sample holds the raw
    per-sample scalars, one row per sample, for correlated statistics.
    """

    kind: str
    values: np.ndarray
    se: np.ndarray
    samples: int
    seed: int
    spec: EnsembleSpec
    per_sample: np.ndarray
    block_index: Optional[int] = None

    @property
    def max_order(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class RatioVerdict:
    """Per-m outcome of the one-sided ratio test values[m+1] <= values[m].

    flags[m] is 'pass', 'fail', or 'inconclusive' (value consistent with zero);
    overall is True iff every flag passes.  margins are values[m] -
    values[m+1]; margin_se the combined standard errors.
    """

    ratios: np.ndarray
    margins: np.ndarray
    margin_se: np.ndarray
    flags: tuple[str, ...]
    overall: bool
    first_failing: Optional[int]
    z: float


def _require_scalar_spec(spec: EnsembleSpec, what: str) -> None:
    if n_generators(spec) != 1:
        raise ValueError(f"{what} is defined for single-matrix ensembles (d = 1)")


def _per_sample_table(
    spec: EnsembleSpec,
    M: int,
    S: int,
    seed: int,
    workers: int,
    kinds: tuple[str, ...],
    sizes: Optional[tuple[int, ...]] = None,
) -> dict[str, np.ndarray]:
    """Per-sample scalar tables for the requested kinds, sharing one sample stream."""
    N = dim(spec)
    backend = _accel.get_backend()
    offsets = block_offsets(sizes) if sizes else None
    R = len(sizes) if sizes else 0
    out: dict[str, np.ndarray] = {}
    if "c" in kinds:
        out["c"] = np.empty((S, M + 1))
    if "d" in kinds:
        out["d"] = np.empty((S, M + 1))
    if "block" in kinds:
        out["block"] = np.empty((S, M + 1, R))

    if is_unitary_ensemble(spec):
        # A^m (A^m)* = (A* A)^m = I per sample: every scalar is exactly 1.
        for key in out:
            out[key][:] = 1.0
        return out

    def one_chunk(lo: int, hi: int) -> None:
        for s in range(lo, hi):
            A = sample(spec, SampleIdentity(seed, s))[0]
            if "c" in out or "block" in out:
                P = backend.matrix_powers(A, M)
                if "c" in out:
                    row = backend.c_values(P)
                    if not np.all(np.isfinite(row)):
                        raise ValueError(f"non-finite moment at sample index {s}")
                    out["c"][s] = row
                if "block" in out:
                    out["block"][s] = backend.block_values(P, offsets)
            if "d" in out:
                row = backend.d_values(A, M)
                if not np.all(np.isfinite(row)):
                    raise ValueError(f"non-finite moment at sample index {s}")
                out["d"][s] = row

    _mc.map_chunks(one_chunk, S, workers)
    return out


def _finalize(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    S = table.shape[0]
    values = table.mean(axis=0)
    if S < 2:
        return values, np.zeros_like(values)
    se = table.std(axis=0, ddof=1) / np.sqrt(S)
    return values, se


def c_sequence(
    spec: EnsembleSpec, M: int, S: int, seed: int, workers: int = 1
) -> MomentSequence:
    """Monte Carlo estimate of c_m = (1/N) Tr E[A^m (A^m)*] for m = 0..M."""
    _require_scalar_spec(spec, "c_sequence")
    if S < 1 or M < 0:
        raise ValueError("need S >= 1 and M >= 0")
    table = _per_sample_table(spec, M, S, seed, workers, ("c",))["c"]
    values, se = _finalize(table)
    return MomentSequence("c", values, se, S, seed, spec, table)


def d_sequence(
    spec: EnsembleSpec, M: int, S: int, seed: int, workers: int = 1
) -> MomentSequence:
    """Monte Carlo estimate of d_m = (1/N) Tr E[(A* A)^m] for m = 0..M."""
    _require_scalar_spec(spec, "d_sequence")
    if S < 1 or M < 0:
        raise ValueError("need S >= 1 and M >= 0")
    table = _per_sample_table(spec, M, S, seed, workers, ("d",))["d"]
    values, se = _finalize(table)
    return MomentSequence("d", values, se, S, seed, spec, table)


def cd_sequences(
    spec: EnsembleSpec, M: int, S: int, seed: int, workers: int = 1
) -> tuple[MomentSequence, MomentSequence, np.ndarray]:
    """c and d sequences from one shared sample stream, plus the SE of c_m - d_m.

    Sharing the stream makes the difference statistics benefit from the
    correlation between the two estimators.
    """
    _require_scalar_spec(spec, "cd_sequences")
    tables = _per_sample_table(spec, M, S, seed, workers, ("c", "d"))
    c_vals, c_se = _finalize(tables["c"])
    d_vals, d_se = _finalize(tables["d"])
    _, diff_se = _finalize(tables["c"] - tables["d"])
    return (
        MomentSequence("c", c_vals, c_se, S, seed, spec, tables["c"]),
        MomentSequence("d", d_vals, d_se, S, seed, spec, tables["d"]),
        diff_se,
    )


def block_c_sequence(
    spec: EnsembleSpec,
    sizes: tuple[int, ...],
    M: int,
    S: int,
    seed: int,
    workers: int = 1,
) -> list[MomentSequence]:
    """Per-block sequences c^(r)_m = (1/k_r) Tr E[P_r A^m (A^m)* P_r], one per block."""
    _require_scalar_spec(spec, "block_c_sequence")
    sizes = tuple(int(k) for k in sizes)
    if sum(sizes) != dim(spec):
        raise ValueError(f"block sizes {sizes} do not sum to n={dim(spec)}")
    table = _per_sample_table(spec, M, S, seed, workers, ("block",), sizes)["block"]
    out = []
    for r in range(len(sizes)):
        values, se = _finalize(table[:, :, r])
        out.append(
            MomentSequence("c_block", values, se, S, seed, spec, table[:, :, r], r)
        )
    return out


def ratio_test(seq: MomentSequence, z: float = 3.0) -> RatioVerdict:
    """One-sided test of values[m+1] <= values[m] with a z * SE noise margin.

    The margin keeps Monte Carlo noise from failing ensembles sitting at the
    equality boundary; an entry consistent with zero makes its ratio
    inconclusive rather than certified.
    """
    v, se = seq.values, seq.se
    M = len(v) - 1
    ratios = np.full(M, np.nan)
    margins = np.empty(M)
    margin_se = np.empty(M)
    flags: list[str] = []
    first_failing = None
    for m in range(M):
        margins[m] = v[m] - v[m + 1]
        margin_se[m] = float(np.hypot(se[m], se[m + 1]))
        if v[m] > z * se[m]:
            ratios[m] = v[m + 1] / v[m]
        if v[m] <= z * se[m]:
            flags.append("inconclusive")
        elif v[m + 1] <= v[m] + z * margin_se[m]:
            flags.append("pass")
        else:
            flags.append("fail")
            if first_failing is None:
                first_failing = m
    overall = all(f == "pass" for f in flags)
    return RatioVerdict(
        ratios=ratios,
        margins=margins,
        margin_se=margin_se,
        flags=tuple(flags),
        overall=overall,
        first_failing=first_failing,
        z=z,
    )


@dataclass(frozen=True)
class BlockRatioSummary:
    verdicts: tuple[RatioVerdict, ...]
    overall: bool
    failing_blocks: tuple[int, ...]
    worst_block: Optional[int]


def block_ratio_summary(
    seqs: list[MomentSequence], z: float = 3.0
) -> BlockRatioSummary:
    """Combine per-block ratio verdicts; the worst block has the largest violation."""
    verdicts = tuple(ratio_test(s, z) for s in seqs)
    failing = tuple(r for r, verd in enumerate(verdicts) if not verd.overall and verd.first_failing is not None)
    worst = None
    worst_violation = 0.0
    for r in failing:
        verd = verdicts[r]
        violation = max(-(verd.margins - verd.z * verd.margin_se)) if len(verd.margins) else 0.0
        if worst is None or violation > worst_violation:
            worst, worst_violation = r, violation
    overall = all(v.overall for v in verdicts)
    return BlockRatioSummary(verdicts, overall, failing, worst)


# ---------------------------------------------------------------------------
# analytic reference values


def catalan(m: int) -> int:
    """Catalan number C_m = binom(2m, m) / (m + 1), exact."""
    if m < 0:
        raise ValueError(f"need m >= 0, got {m}")
    if m > CATALAN_CAP:
        raise ValueError(f"m={m} beyond cap {CATALAN_CAP}")
    return comb(2 * m, m) // (m + 1)


def fuss_catalan_moment(m: int, p: int) -> Fraction:
    """p-th moment binom((m+1) p, p) / (m p + 1) of the order-(m+1) Fuss-Catalan law."""
    if m < 0 or p < 1:
        raise ValueError(f"need m >= 0 and p >= 1, got m={m}, p={p}")
    if (m + 1) * p > FUSS_CAP:
        raise ValueError(f"(m+1)*p={(m + 1) * p} beyond cap {FUSS_CAP}")
    return Fraction(comb((m + 1) * p, p), m * p + 1)


def mp_moment(k: int, y: float, sigma2: float) -> float:
    """k-th Marchenko-Pastur moment at aspect ratio y and scale sigma2.

    sigma2^k * sum_{r=0}^{k-1} binom(k, r) binom(k-1, r) y^r / (r + 1); the sum
    is evaluated in exact rational arithmetic before conversion.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if y <= 0 or sigma2 <= 0:
        raise ValueError("need y > 0 and sigma2 > 0")
    yq = Fraction(y)
    total = sum(
        Fraction(comb(k, r) * comb(k - 1, r), r + 1) * yq**r for r in range(k)
    )
    return float(total) * float(sigma2) ** k


@dataclass(frozen=True)
class AsymptoticRow:
    m: int
    value: float
    se: float
    limit: float
    deviation: float
    deviation_over_se: float
    within: bool


def _limit(kind: str, m: int, tau: float) -> float:
    if kind == "c":
        return tau**m
    if kind == "d":
        return tau**m * catalan(m)
    raise ValueError(f"no asymptotic limit for kind {kind!r}")


def asymptotic_report(
    seq: MomentSequence, tau: float, kind: Optional[str] = None
) -> list[AsymptoticRow]:
    """Compare a measured sequence against its large-N limit (tau^m or tau^m C_m).

    A row is `within` when the deviation is below max(4 * SE, 5% of the limit).
    """
    if kind is None:
        kind = seq.kind
    if kind != seq.kind:
        raise ValueError(f"sequence kind {seq.kind!r} does not match requested {kind!r}")
    rows = []
    for m in range(len(seq.values)):
        limit = _limit(kind, m, tau)
        dev = float(seq.values[m] - limit)
        se = float(seq.se[m])
        over = abs(dev) / se if se > 0 else (0.0 if dev == 0 else float("inf"))
        rows.append(
            AsymptoticRow(
                m=m,
                value=float(seq.values[m]),
                se=se,
                limit=limit,
                deviation=dev,
                deviation_over_se=over,
                within=abs(dev) <= max(4.0 * se, 0.05 * abs(limit)),
            )
        )
    return rows


def difference_rows(
    c_seq: MomentSequence, d_seq: MomentSequence, tau: float, diff_se: np.ndarray
) -> list[AsymptoticRow]:
    """Rows for c_m - d_m against its limit tau^m (1 - C_m), using correlated SEs."""
    if c_seq.per_sample.shape != d_seq.per_sample.shape:
        raise ValueError("c and d sequences must come from the same run")
    rows = []
    for m in range(len(c_seq.values)):
        limit = tau**m * (1 - catalan(m))
        value = float(c_seq.values[m] - d_seq.values[m])
        dev = value - limit
        se = float(diff_se[m])
        over = abs(dev) / se if se > 0 else (0.0 if dev == 0 else float("inf"))
        rows.append(
            AsymptoticRow(
                m=m,
                value=value,
                se=se,
                limit=limit,
                deviation=dev,
                deviation_over_se=over,
                within=abs(dev) <= max(4.0 * se, 0.05 * abs(limit)) if limit != 0 else abs(dev) <= 4.0 * se,
            )
        )
    return rows
