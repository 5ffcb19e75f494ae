"""Run configuration: strict JSON parsing with field-path error reporting.

Unknown fields are rejected everywhere; a silent typo in a tolerance name
would corrupt verdicts.  validate_config returns either a RunConfig with all
defaults resolved or the full list of errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from kernelrn.ensembles import (
    BlockGinibre,
    Deterministic,
    EnsembleSpec,
    Ginibre,
    GinibreRaw,
    GinibreTuple,
    HaarUnitary,
    n_generators,
)
from kernelrn.kernel import ENFORCE_MODES, Subalgebra
from kernelrn.rn import RnTolerances
from kernelrn.vn import NcPolynomial
from kernelrn.words import Word

DEFAULT_Z = 3.0
DEFAULT_MAX_ORDER = 4


class ConfigError(ValueError):
    """Invalid configuration; .errors lists 'field.path: message' entries."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass
class AnalysisConfig:
    max_order: int = DEFAULT_MAX_ORDER
    subalgebra: Subalgebra = field(default_factory=Subalgebra.full)
    enforce: str = "none"
    z: float = DEFAULT_Z
    sequences: tuple[str, ...] = ("c", "d")
    tolerances: Optional[RnTolerances] = None  # None: derive from MC noise


@dataclass
class VnConfig:
    polynomial: NcPolynomial
    y: Optional[np.ndarray]  # None means identity
    depth: Optional[int]
    vector: Optional[np.ndarray]


@dataclass
class OutputConfig:
    directory: str = "."
    formats: tuple[str, ...] = ("json", "csv")


@dataclass
class RunConfig:
    ensemble: EnsembleSpec
    samples: int
    seed: int
    workers: Optional[int]
    analysis: AnalysisConfig
    vn: Optional[VnConfig]
    output: OutputConfig


class _Reader:
    """Tracks consumed keys so unknown fields surface with their full path."""

    def __init__(self, data: dict, path: str, errors: list[str]):
        self.data = data
        self.path = path
        self.errors = errors
        self.seen: set[str] = set()

    def err(self, key: str, msg: str) -> None:
        where = f"{self.path}.{key}" if self.path else key
        self.errors.append(f"{where}: {msg}")

    def get(self, key: str, required: bool = False, default: Any = None) -> Any:
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.err(key, "missing required field")
            return default
        return self.data[key]

    def finish(self) -> None:
        for key in sorted(set(self.data) - self.seen):
            self.err(key, "unknown field")


def _as_int(r: _Reader, key: str, value: Any, minimum: int) -> Optional[int]:
    if not isinstance(value, int) or isinstance(value, bool):
        r.err(key, f"expected an integer, got {value!r}")
        return None
    if value < minimum:
        r.err(key, f"must be >= {minimum}, got {value}")
        return None
    return value


def _as_number(r: _Reader, key: str, value: Any, positive: bool = False) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        r.err(key, f"expected a number, got {value!r}")
        return None
    v = float(value)
    if not np.isfinite(v):
        r.err(key, "must be finite")
        return None
    if positive and v <= 0:
        r.err(key, f"must be > 0, got {v}")
        return None
    return v


def _as_complex(r: _Reader, key: str, value: Any) -> Optional[complex]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        return complex(value[0], value[1])
    r.err(key, f"expected a number or [re, im] pair, got {value!r}")
    return None


def _parse_ensemble(data: Any, errors: list[str]) -> Optional[EnsembleSpec]:
    if not isinstance(data, dict):
        errors.append("ensemble: expected an object")
        return None
    r = _Reader(data, "ensemble", errors)
    kind = r.get("kind", required=True)
    try:
        if kind == "ginibre":
            n = _as_int(r, "n", r.get("n", required=True), 1)
            tau = _as_number(r, "tau", r.get("tau", required=True), positive=True)
            r.finish()
            return Ginibre(n, tau) if None not in (n, tau) and not errors else None
        if kind == "ginibre_raw":
            n = _as_int(r, "n", r.get("n", required=True), 1)
            s2 = _as_number(r, "sigma2", r.get("sigma2", required=True), positive=True)
            r.finish()
            return GinibreRaw(n, s2) if None not in (n, s2) and not errors else None
        if kind == "haar":
            n = _as_int(r, "n", r.get("n", required=True), 1)
            r.finish()
            return HaarUnitary(n) if n is not None and not errors else None
        if kind == "block_ginibre":
            sizes = r.get("sizes", required=True)
            tau = r.get("tau", required=True)
            r.finish()
            if not isinstance(sizes, list) or not all(
                isinstance(k, int) and not isinstance(k, bool) and k >= 1 for k in sizes
            ):
                r.err("sizes", "expected a list of positive integers")
                return None
            R = len(sizes)
            if (
                not isinstance(tau, list)
                or len(tau) != R
                or any(not isinstance(row, list) or len(row) != R for row in tau)
            ):
                r.err("tau", f"expected a {R}x{R} matrix of variances")
                return None
            for row in tau:
                for t in row:
                    if isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0:
                        r.err("tau", f"variances must be numbers >= 0, got {t!r}")
                        return None
            return BlockGinibre(tuple(sizes), tuple(tuple(float(t) for t in row) for row in tau))
        if kind == "ginibre_tuple":
            d = _as_int(r, "d", r.get("d", required=True), 1)
            n = _as_int(r, "n", r.get("n", required=True), 1)
            tau = _as_number(r, "tau", r.get("tau", required=True), positive=True)
            r.finish()
            return GinibreTuple(d, n, tau) if None not in (d, n, tau) and not errors else None
        if kind == "deterministic":
            mats = r.get("matrices", required=True)
            r.finish()
            if not isinstance(mats, list) or not mats:
                r.err("matrices", "expected a nonempty list of matrices")
                return None
            parsed = []
            for mi, mat in enumerate(mats):
                try:
                    arr = np.array(
                        [[_entry_to_complex(e) for e in row] for row in mat],
                        dtype=np.complex128,
                    )
                except Exception:
                    r.err(f"matrices[{mi}]", "could not parse matrix entries")
                    return None
                parsed.append(arr)
            return Deterministic(tuple(parsed))
        r.err("kind", f"unknown ensemble kind {kind!r}")
        return None
    except ValueError as exc:
        errors.append(f"ensemble: {exc}")
        return None


def _entry_to_complex(e: Any) -> complex:
    if isinstance(e, (int, float)) and not isinstance(e, bool):
        return complex(e)
    if isinstance(e, list) and len(e) == 2:
        return complex(e[0], e[1])
    raise ValueError(f"bad complex entry {e!r}")


def _parse_subalgebra(data: Any, errors: list[str], n: Optional[int]) -> Subalgebra:
    if data is None:
        return Subalgebra.full()
    if isinstance(data, str):
        data = {"kind": data}
    if not isinstance(data, dict):
        errors.append("analysis.subalgebra: expected an object or kind string")
        return Subalgebra.full()
    r = _Reader(data, "analysis.subalgebra", errors)
    kind = r.get("kind", required=True)
    sizes = r.get("sizes")
    r.finish()
    try:
        if kind == "blocks":
            if not isinstance(sizes, list) or not sizes:
                r.err("sizes", "blocks subalgebra needs a sizes list")
                return Subalgebra.full()
            sub = Subalgebra.blocks(sizes)
            if n is not None and sum(sub.sizes) != n:
                r.err("sizes", f"sizes must sum to n ({sum(sub.sizes)} != {n})")
            return sub
        if sizes is not None:
            r.err("sizes", f"sizes only apply to kind='blocks', not {kind!r}")
        return Subalgebra(kind)
    except ValueError as exc:
        errors.append(f"analysis.subalgebra: {exc}")
        return Subalgebra.full()


def _parse_tolerances(data: Any, errors: list[str]) -> Optional[RnTolerances]:
    if data is None:
        return None
    if not isinstance(data, dict):
        errors.append("analysis.tolerances: expected an object")
        return None
    r = _Reader(data, "analysis.tolerances", errors)
    kw = {}
    for name in ("psd_clip_tol", "rank_tol", "density_tol", "leak_tol", "uncertainty"):
        value = r.get(name)
        if value is not None:
            positive = name != "uncertainty"
            v = _as_number(r, name, value, positive=positive)
            if v is not None:
                if name == "uncertainty" and v < 0:
                    r.err(name, "must be >= 0")
                else:
                    kw[name] = v
    r.finish()
    if errors:
        return None
    return RnTolerances(**kw)


def _parse_analysis(data: Any, errors: list[str], n: Optional[int]) -> AnalysisConfig:
    cfg = AnalysisConfig()
    if data is None:
        return cfg
    if not isinstance(data, dict):
        errors.append("analysis: expected an object")
        return cfg
    r = _Reader(data, "analysis", errors)
    max_order = r.get("max_order")
    if max_order is not None:
        v = _as_int(r, "max_order", max_order, 0)
        if v is not None:
            cfg.max_order = v
    cfg.subalgebra = _parse_subalgebra(r.get("subalgebra"), errors, n)
    enforce = r.get("enforce", default="none")
    if enforce not in ENFORCE_MODES:
        r.err("enforce", f"must be one of {ENFORCE_MODES}, got {enforce!r}")
    else:
        cfg.enforce = enforce
    z = r.get("z")
    if z is not None:
        v = _as_number(r, "z", z, positive=True)
        if v is not None:
            cfg.z = v
    seqs = r.get("sequences")
    if seqs is not None:
        if not isinstance(seqs, list) or not seqs or any(s not in ("c", "d") for s in seqs):
            r.err("sequences", f"expected a nonempty sublist of ['c', 'd'], got {seqs!r}")
        else:
            cfg.sequences = tuple(dict.fromkeys(seqs))
    cfg.tolerances = _parse_tolerances(r.get("tolerances"), errors)
    r.finish()
    return cfg


def _parse_polynomial(data: Any, errors: list[str], d: int) -> Optional[NcPolynomial]:
    if not isinstance(data, dict):
        errors.append("vn.polynomial: expected an object")
        return None
    r = _Reader(data, "vn.polynomial", errors)
    terms_raw = r.get("terms", required=True)
    r.finish()
    if not isinstance(terms_raw, list) or not terms_raw:
        r.err("terms", "expected a nonempty list of terms")
        return None
    terms = []
    for ti, term in enumerate(terms_raw):
        if not isinstance(term, dict):
            errors.append(f"vn.polynomial.terms[{ti}]: expected an object")
            return None
        tr = _Reader(term, f"vn.polynomial.terms[{ti}]", errors)
        word_raw = tr.get("word", required=True)
        coeff_raw = tr.get("coeff", required=True)
        tr.finish()
        if not isinstance(word_raw, list) or any(
            not isinstance(i, int) or isinstance(i, bool) or i < 1 for i in word_raw
        ):
            tr.err("word", f"expected a list of generator indices >= 1, got {word_raw!r}")
            return None
        coeff = _as_complex(tr, "coeff", coeff_raw)
        if coeff is None:
            return None
        terms.append((Word(tuple(word_raw)), coeff))
    try:
        return NcPolynomial(d, tuple(terms))
    except ValueError as exc:
        errors.append(f"vn.polynomial: {exc}")
        return None


def _parse_y(data: Any, errors: list[str], n: Optional[int]) -> Optional[np.ndarray]:
    if data is None:
        return None
    if not isinstance(data, dict):
        errors.append("vn.y: expected an object")
        return None
    r = _Reader(data, "vn.y", errors)
    kind = r.get("kind", required=True)
    if kind == "identity":
        r.finish()
        return None
    if kind == "diagonal":
        values = r.get("values", required=True)
        r.finish()
        if not isinstance(values, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in values
        ):
            r.err("values", "expected a list of numbers >= 0")
            return None
        if n is not None and len(values) != n:
            r.err("values", f"length {len(values)} != ensemble dimension {n}")
            return None
        return np.diag(np.array(values, dtype=np.complex128))
    if kind == "matrix":
        entries = r.get("entries", required=True)
        r.finish()
        try:
            Y = np.array(
                [[_entry_to_complex(e) for e in row] for row in entries],
                dtype=np.complex128,
            )
        except Exception:
            r.err("entries", "could not parse matrix entries")
            return None
        if n is not None and Y.shape != (n, n):
            r.err("entries", f"shape {Y.shape} != ({n}, {n})")
            return None
        return Y
    r.err("kind", f"unknown Y kind {kind!r}")
    return None


def _parse_vn(data: Any, errors: list[str], d: int, n: Optional[int]) -> Optional[VnConfig]:
    if data is None:
        return None
    if not isinstance(data, dict):
        errors.append("vn: expected an object")
        return None
    r = _Reader(data, "vn", errors)
    poly = _parse_polynomial(r.get("polynomial", required=True), errors, d)
    y = _parse_y(r.get("y"), errors, n)
    depth_raw = r.get("depth")
    depth = None
    if depth_raw is not None:
        depth = _as_int(r, "depth", depth_raw, 0)
    vec_raw = r.get("vector")
    vector = None
    if vec_raw is not None:
        if not isinstance(vec_raw, list) or not vec_raw:
            r.err("vector", "expected a nonempty list of entries")
        else:
            try:
                vector = np.array([_entry_to_complex(e) for e in vec_raw], dtype=np.complex128)
            except ValueError:
                r.err("vector", "could not parse vector entries")
            if vector is not None and n is not None and vector.shape[0] != n:
                r.err("vector", f"length {vector.shape[0]} != ensemble dimension {n}")
                vector = None
    r.finish()
    if poly is None:
        return None
    return VnConfig(polynomial=poly, y=y, depth=depth, vector=vector)


def _parse_output(data: Any, errors: list[str]) -> OutputConfig:
    cfg = OutputConfig()
    if data is None:
        return cfg
    if not isinstance(data, dict):
        errors.append("output: expected an object")
        return cfg
    r = _Reader(data, "output", errors)
    directory = r.get("directory")
    if directory is not None:
        if not isinstance(directory, str):
            r.err("directory", "expected a string")
        else:
            cfg.directory = directory
    formats = r.get("formats")
    if formats is not None:
        if not isinstance(formats, list) or any(f not in ("json", "csv") for f in formats):
            r.err("formats", f"expected a sublist of ['json', 'csv'], got {formats!r}")
        else:
            cfg.formats = tuple(dict.fromkeys(formats))
    r.finish()
    return cfg


def parse_config(data: dict) -> RunConfig:
    """Parse a config dict; raises ConfigError with all field-path errors."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a JSON object"])
    r = _Reader(data, "", errors)
    ensemble = _parse_ensemble(r.get("ensemble", required=True), errors)
    samples_raw = r.get("samples", required=True)
    samples = _as_int(r, "samples", samples_raw, 2) if samples_raw is not None else None
    seed_raw = r.get("seed", required=True)
    seed = None
    if seed_raw is not None:
        if not isinstance(seed_raw, int) or isinstance(seed_raw, bool) or seed_raw < 0:
            r.err("seed", f"expected a nonnegative integer, got {seed_raw!r}")
        else:
            seed = seed_raw
    workers_raw = r.get("workers")
    workers = None
    if workers_raw is not None:
        workers = _as_int(r, "workers", workers_raw, 1)
    n = ensemble.n if ensemble is not None else None
    analysis = _parse_analysis(r.get("analysis"), errors, n)
    d = n_generators(ensemble) if ensemble is not None else 1
    vn = _parse_vn(r.get("vn"), errors, d, n)
    output = _parse_output(r.get("output"), errors)
    r.finish()
    if errors:
        raise ConfigError(errors)
    assert ensemble is not None and samples is not None and seed is not None
    return RunConfig(
        ensemble=ensemble,
        samples=samples,
        seed=seed,
        workers=workers,
        analysis=analysis,
        vn=vn,
        output=output,
    )


def validate_config(path: Union[str, Path]) -> RunConfig:
    """Load and validate a JSON config file; raises ConfigError on any problem."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    return parse_config(data)
