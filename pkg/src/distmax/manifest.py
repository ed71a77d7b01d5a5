"""Problem ingestion, benchmark generation and machine-readable reports.

Problems are described by a JSON manifest pointing at Matrix Market
files; ``gen_bench`` replicates the seeded random feedback benchmark
protocol (norm-10 state matrix with prescribed spectral abscissa window,
norm sqrt(50) feedback vectors, box [-3, 3]).  Reports serialize every
floating value as a decimal string with 12 significant digits, making
trace files byte-stable across reruns.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.io as sio

from .matmodel import Box, ParamMatrixFun

__all__ = ["ProblemManifest", "ManifestError", "load_problem", "gen_bench",
           "TraceRow", "RunReport", "fmt12"]

MANIFEST_SCHEMA = "distmax-manifest/1"
REPORT_SCHEMA = "distmax-report/1"

# fixed trace column order; wall times live in the report, not the trace,
# so seeded traces stay byte-identical across invocations
TRACE_COLUMNS = ["ell", "x", "err_x_vs_oracle", "z_re", "z_im", "gamma",
                 "reduced_val", "err_val_vs_oracle", "full_val", "gap",
                 "stable", "basis_dim"]

ABSCISSA_WINDOW = (-0.31, -0.23)
BENCH_NORM = 10.0
BENCH_BC_NORM = math.sqrt(50.0)
BENCH_BOX = (-3.0, 3.0)


class ManifestError(ValueError):
    """Manifest or matrix file failed validation."""


def fmt12(v) -> str:
    """Canonical 12-significant-digit decimal string."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


@dataclass(frozen=True)
class ProblemManifest:
    """Validated description of one maximization problem."""

    family: str                       # affine | feedback | custom-affine-terms
    box_lower: List[float]
    box_upper: List[float]
    method: str = "small"
    matrices: List[str] = field(default_factory=list)
    feedback: Optional[dict] = None   # {a, b, c, slots: [[row_of_C, col_of_B], ...]}
    terms: Optional[list] = None      # [{path, scale}, ...] for custom-affine-terms
    tol: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 50
    gamma: Optional[float] = None
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        out = {
            "schema": MANIFEST_SCHEMA,
            "family": self.family,
            "box": {"lower": list(self.box_lower), "upper": list(self.box_upper)},
            "method": self.method,
            "tol": self.tol,
            "tol_gap": self.tol_gap,
            "max_iter": self.max_iter,
        }
        if self.matrices:
            out["matrices"] = list(self.matrices)
        if self.feedback is not None:
            out["feedback"] = self.feedback
        if self.terms is not None:
            out["terms"] = self.terms
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def _read_mm(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise ManifestError(f"{path}: file does not exist")
    with open(path, "rb") as fh:
        first = fh.readline().decode("latin1")
    if not first.startswith("%%MatrixMarket"):
        raise ManifestError(f"{path}: line 1: not a Matrix Market header: {first.strip()!r}")
    try:
        m = sio.mmread(path)
    except Exception as exc:
        raise ManifestError(f"{path}: Matrix Market parse error: {exc}") from exc
    if hasattr(m, "toarray"):
        m = m.toarray()
    return np.asarray(m)


def parse_manifest(path: str) -> ProblemManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    for key in ("family", "box"):
        if key not in raw:
            raise ManifestError(f"{path}: missing required field {key!r}")
    box = raw["box"]
    return ProblemManifest(
        family=raw["family"],
        box_lower=[float(v) for v in box["lower"]],
        box_upper=[float(v) for v in box["upper"]],
        method=raw.get("method", "small"),
        matrices=list(raw.get("matrices", [])),
        feedback=raw.get("feedback"),
        terms=raw.get("terms"),
        tol=float(raw.get("tol", 1e-8)),
        tol_gap=float(raw.get("tol_gap", 1e-8)),
        max_iter=int(raw.get("max_iter", 50)),
        gamma=(float(raw["gamma"]) if "gamma" in raw else None),
        seed=raw.get("seed"),
    )


def _build_family(man: ProblemManifest, base: str) -> ParamMatrixFun:
    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    problems: List[str] = []
    if man.family == "feedback":
        fb = man.feedback or {}
        for key in ("a", "b", "c", "slots"):
            if key not in fb:
                problems.append(f"feedback block missing field {key!r}")
        if problems:
            raise ManifestError("; ".join(problems))
        a = _read_mm(resolve(fb["a"]))
        b = np.atleast_2d(_read_mm(resolve(fb["b"])))
        c = np.atleast_2d(_read_mm(resolve(fb["c"])))
        n = a.shape[0]
        if a.shape != (n, n):
            problems.append(f"A is {a.shape}, expected square")
        if b.shape[0] != n:
            problems.append(f"B has {b.shape[0]} rows, expected {n}")
        if c.shape[1] != n:
            problems.append(f"C has {c.shape[1]} columns, expected {n}")
        terms = []
        for k, (row_c, col_b) in enumerate(fb["slots"], start=1):
            if not 1 <= col_b <= b.shape[1]:
                problems.append(f"slot {k}: column {col_b} outside B with {b.shape[1]} columns")
                continue
            if not 1 <= row_c <= c.shape[0]:
                problems.append(f"slot {k}: row {row_c} outside C with {c.shape[0]} rows")
                continue
            terms.append(np.outer(b[:, col_b - 1], c[row_c - 1, :]))
        if problems:
            raise ManifestError("; ".join(problems))
        return ParamMatrixFun.from_affine(a, terms)

    if man.family == "affine":
        if len(man.matrices) < 2:
            raise ManifestError("affine family needs matrices [B0, B1, ...] with d >= 1")
        mats = [_read_mm(resolve(p)) for p in man.matrices]
        n = mats[0].shape[0]
        for p, m in zip(man.matrices, mats):
            if m.shape != (n, n):
                problems.append(f"{p}: shape {m.shape} differs from leading {n}x{n}")
        if problems:
            raise ManifestError("; ".join(problems))
        return ParamMatrixFun.from_affine(mats[0], mats[1:])

    if man.family == "custom-affine-terms":
        if not man.terms or len(man.terms) < 2:
            raise ManifestError("custom-affine-terms needs terms [{path, scale}, ...] "
                                "with the constant term first")
        mats = []
        for t in man.terms:
            m = _read_mm(resolve(t["path"])) * float(t.get("scale", 1.0))
            mats.append(m)
        n = mats[0].shape[0]
        for t, m in zip(man.terms, mats):
            if m.shape != (n, n):
                problems.append(f"{t['path']}: shape {m.shape} differs from leading {n}x{n}")
        if problems:
            raise ManifestError("; ".join(problems))
        return ParamMatrixFun.from_affine(mats[0], mats[1:])

    raise ManifestError(f"unknown family {man.family!r}")


def load_problem(path: str):
    """Load a manifest and construct (family, box, manifest)."""
    man = parse_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    fun = _build_family(man, base)
    box = Box(lower=np.array(man.box_lower), upper=np.array(man.box_upper))
    if box.dim != fun.dim_d:
        raise ManifestError(f"box dimension {box.dim} does not match parameter count {fun.dim_d}")
    return fun, box, man


def gen_bench(seed: int, n: int, out_dir: str) -> str:
    """Generate a seeded random feedback benchmark; returns the manifest path.

    The state matrix is a real Gaussian sample iteratively scaled to
    2-norm 10 and shifted by real multiples of the identity until its
    spectral abscissa lies in [-0.31, -0.23] after scaling; b and c carry
    norm sqrt(50); the single gain ranges over [-3, 3].
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    lo, hi = ABSCISSA_WINDOW
    target = 0.5 * (lo + hi)
    for _ in range(100):
        a *= BENCH_NORM / np.linalg.norm(a, 2)
        alpha = float(np.linalg.eigvals(a).real.max())
        if lo <= alpha <= hi:
            break
        a += (target - alpha) * np.eye(n)
    else:
        raise RuntimeError("normalization did not settle")
    b *= BENCH_BC_NORM / np.linalg.norm(b)
    c *= BENCH_BC_NORM / np.linalg.norm(c)

    os.makedirs(out_dir, exist_ok=True)
    sio.mmwrite(os.path.join(out_dir, "A.mtx"), a)
    sio.mmwrite(os.path.join(out_dir, "b.mtx"), b[:, None])   # B is n x 1
    sio.mmwrite(os.path.join(out_dir, "c.mtx"), c[None, :])   # C is 1 x n
    man = ProblemManifest(
        family="feedback",
        box_lower=[BENCH_BOX[0]], box_upper=[BENCH_BOX[1]],
        method="basic",
        feedback={"a": "A.mtx", "b": "b.mtx", "c": "c.mtx", "slots": [[1, 1]]},
        seed=int(seed),
    )
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(man.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


@dataclass
class TraceRow:
    """One per-iteration report row; floats are kept as fmt12 strings."""

    ell: int
    x: List[str]
    err_x_vs_oracle: str
    z_re: str
    z_im: str
    gamma: str
    reduced_val: str
    err_val_vs_oracle: str
    full_val: str
    gap: str
    stable: str
    basis_dim: str

    def csv_cells(self) -> List[str]:
        return [str(self.ell), " ".join(self.x), self.err_x_vs_oracle,
                self.z_re, self.z_im, self.gamma, self.reduced_val,
                self.err_val_vs_oracle, self.full_val, self.gap,
                self.stable, self.basis_dim]


@dataclass
class RunReport:
    """Machine-readable run outcome: report.json plus trace.csv."""

    method: str
    status: str
    best_x: List[str]
    best_dist: str
    gap: str
    iterations: int
    basis_dim: int
    rows: List[TraceRow]
    time_reduced_s: str
    time_full_s: str
    time_total_s: str
    oracle: Optional[dict] = None
    message: str = ""

    def to_dict(self) -> dict:
        out = {
            "schema": REPORT_SCHEMA,
            "method": self.method,
            "status": self.status,
            "best_x": self.best_x,
            "best_dist": self.best_dist,
            "gap": self.gap,
            "iterations": self.iterations,
            "basis_dim": self.basis_dim,
            "trace_columns": TRACE_COLUMNS,
            "trace": [row.__dict__ for row in self.rows],
            "wall_time": {
                "reduced_s": self.time_reduced_s,
                "dist_instab_s": self.time_full_s,
                "total_s": self.time_total_s,
            },
        }
        if self.oracle is not None:
            out["oracle"] = self.oracle
        if self.message:
            out["message"] = self.message
        return out

    def write(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        lines = [",".join(TRACE_COLUMNS)]
        lines += [",".join(row.csv_cells()) for row in self.rows]
        with open(os.path.join(out_dir, "trace.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def read_json(path: str) -> dict:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
