"""Batch front-end: validate configs, run analyses, emit JSON and CSV reports.

Subcommands: moments | rn | vn | validate, each driven by a JSON config
(--config), with --seed / --workers / --out overrides.  Reports are written
atomically and contain no timing data, so rerunning the same config and seed
reproduces every output file byte for byte regardless of the worker count;
wall-clock and throughput go to the log on stderr.

Exit codes: 0 all requested verdicts pass, 1 any fail, 2 inconclusive,
3 runtime or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np

import kernelrn
from kernelrn.config import (
    ConfigError,
    OutputConfig,
    RunConfig,
    VnConfig,
    validate_config,
)
from kernelrn.ensembles import (
    BlockGinibre,
    Deterministic,
    Ginibre,
    GinibreRaw,
    GinibreTuple,
    HaarUnitary,
)
from kernelrn import _accel
from kernelrn.kernel import Subalgebra, estimate_kernel
from kernelrn.moments import (
    asymptotic_report,
    block_c_sequence,
    block_ratio_summary,
    c_sequence,
    cd_sequences,
    difference_rows,
    ratio_test,
)
from kernelrn.rn import shift_analysis
from kernelrn.vn import vector_bound_check, vn_check

log = logging.getLogger("kernelrn")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_ERROR = 3

WORKERS_ENV = "KERNELRN_WORKERS"


# ---------------------------------------------------------------------------
# serialization helpers


def _py(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays into plain JSON-ready values."""
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj: dict) -> None:
    _atomic_write(path, json.dumps(_py(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    _atomic_write(path, buf.getvalue())


def _spec_echo(spec) -> dict:
    if isinstance(spec, Ginibre):
        return {"kind": "ginibre", "n": spec.n, "tau": spec.tau}
    if isinstance(spec, GinibreRaw):
        return {"kind": "ginibre_raw", "n": spec.n, "sigma2": spec.sigma2}
    if isinstance(spec, HaarUnitary):
        return {"kind": "haar", "n": spec.n}
    if isinstance(spec, BlockGinibre):
        return {"kind": "block_ginibre", "sizes": list(spec.sizes), "tau": [list(r) for r in spec.tau]}
    if isinstance(spec, GinibreTuple):
        return {"kind": "ginibre_tuple", "d": spec.d, "n": spec.n, "tau": spec.tau}
    if isinstance(spec, Deterministic):
        return {
            "kind": "deterministic",
            "matrices": [
                [[[float(z.real), float(z.imag)] for z in row] for row in m] for m in spec.matrices
            ],
        }
    raise TypeError(f"unknown spec {type(spec).__name__}")


def _subalgebra_echo(b: Subalgebra) -> dict:
    out: dict[str, Any] = {"kind": b.kind}
    if b.sizes is not None:
        out["sizes"] = list(b.sizes)
    return out


def _tolerances_echo(tols) -> dict:
    return {
        "psd_clip_tol": tols.psd_clip_tol,
        "rank_tol": tols.rank_tol,
        "density_tol": tols.density_tol,
        "leak_tol": tols.leak_tol,
        "uncertainty": tols.uncertainty,
    }


def _config_echo(cfg: RunConfig) -> dict:
    # workers deliberately omitted: reports must not depend on the execution plan
    echo: dict[str, Any] = {
        "ensemble": _spec_echo(cfg.ensemble),
        "samples": cfg.samples,
        "seed": cfg.seed,
        "analysis": {
            "max_order": cfg.analysis.max_order,
            "subalgebra": _subalgebra_echo(cfg.analysis.subalgebra),
            "enforce": cfg.analysis.enforce,
            "z": cfg.analysis.z,
            "sequences": list(cfg.analysis.sequences),
            "tolerances": (
                "auto" if cfg.analysis.tolerances is None
                else _tolerances_echo(cfg.analysis.tolerances)
            ),
        },
        "output": {"directory": cfg.output.directory, "formats": list(cfg.output.formats)},
    }
    if cfg.vn is not None:
        echo["vn"] = {
            "polynomial": {
                "terms": [
                    {"word": list(w.letters), "coeff": [c.real, c.imag]}
                    for w, c in cfg.vn.polynomial.terms
                ]
            },
            "y": "identity" if cfg.vn.y is None else "explicit",
            "depth": cfg.vn.depth,
            "vector": None if cfg.vn.vector is None else _py(cfg.vn.vector),
        }
    return echo


def _known_tau(spec) -> Optional[float]:
    if isinstance(spec, Ginibre):
        return spec.tau
    if isinstance(spec, GinibreRaw):
        return spec.sigma2 * spec.n
    return None


# ---------------------------------------------------------------------------
# runners


def _moment_rows(seq, verdict, limits: Optional[list[float]]) -> list[dict]:
    rows = []
    M = seq.max_order
    for m in range(M + 1):
        row = {
            "m": m,
            "value": float(seq.values[m]),
            "se": float(seq.se[m]),
            "limit": None if limits is None else limits[m],
            "ratio": None,
            "margin": None,
            "margin_se": None,
            "flag": None,
        }
        if verdict is not None and m < M:
            ratio = verdict.ratios[m]
            row["ratio"] = None if np.isnan(ratio) else float(ratio)
            row["margin"] = float(verdict.margins[m])
            row["margin_se"] = float(verdict.margin_se[m])
            row["flag"] = verdict.flags[m]
        rows.append(row)
    return rows


def _rows_to_csv(rows: list[dict]) -> list[list]:
    out = []
    for row in rows:
        flag = row["flag"]
        out.append(
            [
                row["m"],
                row["value"],
                row["se"],
                row["limit"],
                row["ratio"],
                row["margin"],
                None if flag is None else ("pass" if flag == "pass" else flag),
            ]
        )
    return out


MOMENTS_CSV_HEADER = ["m", "value", "se", "limit", "ratio", "margin", "pass"]


def _verdict_exit(flags: list[str]) -> int:
    if any(f == "fail" for f in flags):
        return EXIT_FAIL
    if any(f == "inconclusive" for f in flags):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def run_moments(cfg: RunConfig, workers: int, out_dir: Path) -> int:
    spec, S, seed = cfg.ensemble, cfg.samples, cfg.seed
    a = cfg.analysis
    M, z = a.max_order, a.z
    t0 = time.perf_counter()
    tau = _known_tau(spec)

    results: dict[str, Any] = {}
    all_flags: list[str] = []

    if "d" in a.sequences:
        c_seq, d_seq, diff_se = cd_sequences(spec, M, S, seed, workers)
    else:
        c_seq, d_seq, diff_se = c_sequence(spec, M, S, seed, workers), None, None
    log.info(
        "sampled %d matrices (n=%d) in %.2fs (%.0f samples/s)",
        S, spec.n, time.perf_counter() - t0, S / max(time.perf_counter() - t0, 1e-9),
    )

    c_verdict = ratio_test(c_seq, z)
    all_flags.extend(c_verdict.flags)
    c_limits = [tau**m for m in range(M + 1)] if tau is not None else None
    c_rows = _moment_rows(c_seq, c_verdict, c_limits)
    results["c"] = {
        "rows": c_rows,
        "overall": c_verdict.overall,
        "first_failing": c_verdict.first_failing,
    }
    if tau is not None:
        results["c"]["asymptotic"] = [vars(r) for r in asymptotic_report(c_seq, tau)]

    if d_seq is not None:
        d_limits = None
        if tau is not None:
            from kernelrn.moments import catalan

            d_limits = [tau**m * catalan(m) for m in range(M + 1)]
        results["d"] = {"rows": _moment_rows(d_seq, None, d_limits)}
        if tau is not None:
            results["d"]["asymptotic"] = [vars(r) for r in asymptotic_report(d_seq, tau)]
            results["difference"] = [
                vars(r) for r in difference_rows(c_seq, d_seq, tau, diff_se)
            ]

    block_csvs: list[tuple[str, list[list]]] = []
    if a.subalgebra.kind == "blocks":
        sizes = a.subalgebra.sizes
        seqs = block_c_sequence(spec, sizes, M, S, seed, workers)
        summary = block_ratio_summary(seqs, z)
        blocks_out = []
        for r, (bseq, bverd) in enumerate(zip(seqs, summary.verdicts)):
            all_flags.extend(bverd.flags)
            rows = _moment_rows(bseq, bverd, None)
            blocks_out.append(
                {
                    "block": r + 1,
                    "size": sizes[r],
                    "rows": rows,
                    "overall": bverd.overall,
                    "first_failing": bverd.first_failing,
                }
            )
            block_csvs.append((f"moments_block{r + 1}.csv", _rows_to_csv(rows)))
        results["blocks"] = {
            "per_block": blocks_out,
            "overall": summary.overall,
            "failing_blocks": [r + 1 for r in summary.failing_blocks],
            "worst_block": None if summary.worst_block is None else summary.worst_block + 1,
        }
        if not summary.overall:
            log.info(
                "blockwise ratio test failed; worst block %s",
                None if summary.worst_block is None else summary.worst_block + 1,
            )

    code = _verdict_exit(all_flags)
    overall = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}[code]
    report = {
        "tool": {"name": "kernelrn", "version": kernelrn.__version__},
        "command": "moments",
        "backend": _accel.active_backend_name(),
        "config": _config_echo(cfg),
        "results": results,
        "overall": overall,
    }
    _emit(cfg.output, out_dir, report, csvs=[("moments.csv", _rows_to_csv(c_rows))] + block_csvs)
    log.info("moments: %s (exit %d)", overall, code)
    return code


def run_rn(cfg: RunConfig, workers: int, out_dir: Path) -> int:
    spec, S, seed = cfg.ensemble, cfg.samples, cfg.seed
    a = cfg.analysis
    M, z = a.max_order, a.z
    t0 = time.perf_counter()
    block_sizes = a.subalgebra.sizes if a.subalgebra.kind == "blocks" else None
    K = estimate_kernel(spec, M + 1, S, seed, workers, block_sizes=block_sizes)
    log.info(
        "estimated kernel to word length %d from %d samples in %.2fs",
        M + 1, S, time.perf_counter() - t0,
    )

    analysis = shift_analysis(K, a.subalgebra, M, a.enforce, a.tolerances, z)
    density, ot = analysis.density, analysis.order
    agreement = analysis.agreement
    if agreement is False:
        log.warning(
            "order test (%s) disagrees with density verdict (%s)",
            ot.passes, density.verdict,
        )

    results = {
        "density": {
            "eigenvalues": density.eigenvalues,
            "lambda_min": density.lambda_min,
            "lambda_max": density.lambda_max,
            "violation_margin": density.violation_margin,
            "reconstruction_residual": density.reconstruction_residual,
            "support_leak": density.support_leak,
            "rank": density.rank,
            "verdict": density.verdict,
        },
        "order_test": {
            "passes": ot.passes,
            "min_eig_of_difference": ot.min_eig_of_difference,
            "tolerance": analysis.order_tol,
        },
        "agreement": agreement,
        "tolerances": _tolerances_echo(density.tolerances),
        "gram_order": M,
        "gram_side": int(analysis.grams.G.shape[0]),
    }
    code = {
        "dominated": EXIT_PASS,
        "not_dominated": EXIT_FAIL,
        "inconclusive": EXIT_INCONCLUSIVE,
    }[density.verdict]
    if agreement is False:
        code = EXIT_FAIL
    overall = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}[code]
    report = {
        "tool": {"name": "kernelrn", "version": kernelrn.__version__},
        "command": "rn",
        "backend": _accel.active_backend_name(),
        "config": _config_echo(cfg),
        "results": results,
        "overall": overall,
    }
    density_rows = [[i, float(v)] for i, v in enumerate(density.eigenvalues)]
    _emit(cfg.output, out_dir, report, csvs=[("density.csv", density_rows)], density=True)
    log.info("rn: %s (exit %d)", overall, code)
    return code


_VN_RANK = {"certified_pass": 0, "inconclusive": 1, "certified_fail": 2}
_VN_EXIT = {"certified_pass": EXIT_PASS, "inconclusive": EXIT_INCONCLUSIVE, "certified_fail": EXIT_FAIL}


def run_vn(cfg: RunConfig, workers: int, out_dir: Path) -> int:
    if cfg.vn is None:
        raise ConfigError(["vn: section required for the vn subcommand"])
    spec, S, seed = cfg.ensemble, cfg.samples, cfg.seed
    a = cfg.analysis
    v: VnConfig = cfg.vn
    t0 = time.perf_counter()
    check = vn_check(
        spec, v.polynomial, a.subalgebra, v.y,
        samples=S, seed=seed, depth=v.depth, z=a.z, workers=workers,
    )
    log.info("vn check over %d samples in %.2fs", S, time.perf_counter() - t0)
    results: dict[str, Any] = {
        "check": {
            "lambda_max": check.lambda_max,
            "lambda_se": check.lambda_se,
            "rhs_low_sq": check.rhs_low_sq,
            "rhs_high_sq": check.rhs_high_sq,
            "verdict": check.verdict,
            "bound": {
                "lower": check.bound.lower,
                "upper": check.bound.upper,
                "exact": check.bound.exact,
                "exact_reason": check.bound.exact_reason,
                "depth": check.bound.depth,
            },
        }
    }
    verdicts = [check.verdict]
    if v.vector is not None:
        vec = vector_bound_check(
            spec, v.polynomial, v.vector, samples=S, seed=seed, depth=v.depth,
            z=a.z, workers=workers,
        )
        results["vector"] = {
            "lhs": vec.lhs,
            "lhs_se": vec.lhs_se,
            "rhs_low_sq": vec.rhs_low_sq,
            "rhs_high_sq": vec.rhs_high_sq,
            "verdict": vec.verdict,
        }
        verdicts.append(vec.verdict)
    worst = max(verdicts, key=lambda s: _VN_RANK[s])
    code = _VN_EXIT[worst]
    overall = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}[code]
    report = {
        "tool": {"name": "kernelrn", "version": kernelrn.__version__},
        "command": "vn",
        "backend": _accel.active_backend_name(),
        "config": _config_echo(cfg),
        "results": results,
        "overall": overall,
    }
    _emit(cfg.output, out_dir, report, csvs=[])
    log.info("vn: %s (exit %d)", overall, code)
    return code


def _emit(
    output: OutputConfig,
    out_dir: Path,
    report: dict,
    csvs: list[tuple[str, list[list]]],
    density: bool = False,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in output.formats:
        _write_json(out_dir / "report.json", report)
        log.info("wrote %s", out_dir / "report.json")
    if "csv" in output.formats:
        for name, rows in csvs:
            header = ["index", "eigenvalue"] if density and name == "density.csv" else MOMENTS_CSV_HEADER
            _write_csv(out_dir / name, header, rows)
            log.info("wrote %s", out_dir / name)


# ---------------------------------------------------------------------------
# entry point


def _resolve_workers(cli_value: Optional[int], cfg: RunConfig) -> int:
    if cli_value is not None:
        return cli_value
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"{WORKERS_ENV}: expected an integer, got {env!r}"])
    return os.cpu_count() or 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelrn",
        description="Moment-kernel positivity tests for random matrix ensembles",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("moments", "moment sequences and ratio threshold tests"),
        ("rn", "shifted-kernel Radon-Nikodym density and order test"),
        ("vn", "localized von Neumann inequality checks"),
        ("validate", "validate a config file and exit"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None, help="worker thread count")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = _build_parser().parse_args(argv)
    try:
        cfg = validate_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "validate":
            print("config OK")
            return EXIT_PASS
        workers = _resolve_workers(args.workers, cfg)
        out_dir = Path(args.out) if args.out is not None else Path(cfg.output.directory)
        runner = {"moments": run_moments, "rn": run_rn, "vn": run_vn}[args.command]
        return runner(cfg, workers, out_dir)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # pragma: no cover - defensive
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
