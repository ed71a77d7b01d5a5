"""Subspace frameworks for maximizing the distance to instability.

Three variants of the greedy one-sided projection loop: the basic
framework expands with one singular (or unstable-eigen) vector per
iteration, the extended framework additionally interpolates at stencil
points around each maximizer, and the uniformly-stable variant restricts
the inner minimization to the imaginary axis.  Termination is by the gap
certificate: the reduced maximum bounds the true maximum from above, the
full distance at the maximizer bounds it from below.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import eigopt
from .matmodel import Box, ParamMatrixFun, eval_full
from .reduced import (ReducedFamily, _minimize_reduced, gamma_reduced_affine,
                      gamma_reduced_general)
from .stability import distance_to_instability

__all__ = ["SubspaceState", "SubspaceConfig", "IterRecord", "RunTrace",
           "expand_basis", "run_basic", "run_extended", "run_uniform"]

REPEAT_TOL = 1e-12


@dataclass(frozen=True)
class SubspaceState:
    """Orthonormal basis of the current projection subspace."""

    v: np.ndarray

    @property
    def ell(self) -> int:
        return self.v.shape[1]


@dataclass(frozen=True)
class SubspaceConfig:
    tol_gap: float = 1e-8
    max_iter: int = 50
    inner_tol: float = 1e-9
    drop_tol: float = 1e-10
    variant: str = "basic"
    eigopt_tol: Optional[float] = None      # default: 1e-2 * tol_gap on the squared objective
    eigopt_max_iter: int = 400
    # objective evaluations inside the reduced maximization run grid+polish
    # only.  The per-iteration gap evaluation adds a Lipschitz sweep: since
    # evaluated minima only ever over-estimate the true reduced value, a
    # relaxed sweep keeps the gap certificate sound and merely risks extra
    # iterations on a missed basin.
    eval_polish_starts: int = 3
    gap_cert_tol: float = 1e-7
    gap_budget: int = 150_000

    def __post_init__(self):
        if self.tol_gap <= 0 or self.inner_tol <= 0 or self.drop_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.variant not in ("basic", "extended", "uniform"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class IterRecord:
    """One outer iteration: the new iterate and its certificates."""

    ell: int
    x: np.ndarray
    z: complex
    reduced_val: float
    full_val: float
    stable: bool
    basis_dim: int
    gamma_used: float
    gap: float
    n_full_evals: int = 1
    dropped: int = 0
    inner_certified: bool = True
    time_reduced: float = 0.0
    time_full: float = 0.0
    stencil: list = field(default_factory=list)   # (x_pq, z_pq, stable) tuples


@dataclass
class RunTrace:
    """Full record of a subspace-framework run."""

    variant: str
    records: List[IterRecord]
    status: str
    x_best: np.ndarray
    f_best: float
    gap_final: float
    x_init: np.ndarray
    z_init: complex
    init_stable: bool
    init_full_val: float
    basis: np.ndarray
    iterates: List[np.ndarray]
    z_points: List[complex]
    time_reduced_total: float
    time_full_total: float
    message: str = ""


def expand_basis(state: SubspaceState, v: np.ndarray, drop_tol: float = 1e-10):
    """Gram-Schmidt expansion with one re-orthogonalization pass.

    Returns (state, dropped): the vector is dropped when its residual
    after projection falls below drop_tol * ||v||, keeping the basis
    well conditioned near convergence.
    """
    v = np.asarray(v, dtype=complex).ravel()
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("cannot expand with the zero vector")
    basis = state.v
    w = v - basis @ (basis.conj().T @ v)
    w -= basis @ (basis.conj().T @ w)
    r = np.linalg.norm(w)
    if r <= drop_tol * nrm:
        return state, True
    return SubspaceState(v=np.concatenate([basis, (w / r)[:, None]], axis=1)), False


def _probe_full(fun: ParamMatrixFun, x: np.ndarray, tol: float):
    """Full-problem stability probe: distance data and expansion vector."""
    res = distance_to_instability(eval_full(fun, x), tol=tol)
    if res.stable:
        return res, res.dist, res.z_star, res.triplet.v
    return res, 0.0, res.z_star, res.eigvec


def _reduced_gamma(fun: ParamMatrixFun, state: SubspaceState, box: Box) -> float:
    if fun.affine:
        return gamma_reduced_affine(fun, state.v)
    return gamma_reduced_general(fun, state.v, box)


def _stencil_dirs(d: int) -> List[np.ndarray]:
    """Unit directions e_pq = (e_p + e_q)/sqrt(2) (e_p when p = q), in
    lexicographic (p, q) order."""
    dirs = []
    eye = np.eye(d)
    for p in range(d):
        for q in range(p, d):
            if p == q:
                dirs.append(eye[p].copy())
            else:
                dirs.append((eye[p] + eye[q]) / np.sqrt(2.0))
    return dirs


def _run(fun: ParamMatrixFun, box: Box, cfg: SubspaceConfig) -> RunTrace:
    uniform = cfg.variant == "uniform"
    extended = cfg.variant == "extended"
    eig_tol_base = cfg.eigopt_tol if cfg.eigopt_tol is not None else 1e-2 * cfg.tol_gap
    half_diag_sq = float(np.sum((0.5 * (box.upper - box.lower)) ** 2))

    t0 = time.perf_counter()
    x_init = box.midpoint
    res0, full0, z0, vec0 = _probe_full(fun, x_init, cfg.inner_tol)
    time_full_total = time.perf_counter() - t0
    time_reduced_total = 0.0

    iterates = [x_init.copy()]
    z_points = [z0]
    records: List[IterRecord] = []
    x_best, f_best = x_init.copy(), full0

    def finish(status, gap, message=""):
        return RunTrace(variant=cfg.variant, records=records, status=status,
                        x_best=x_best, f_best=f_best, gap_final=gap,
                        x_init=x_init, z_init=z0, init_stable=res0.stable,
                        init_full_val=full0, basis=state.v, iterates=iterates,
                        z_points=z_points, time_reduced_total=time_reduced_total,
                        time_full_total=time_full_total, message=message)

    state = SubspaceState(v=(vec0 / np.linalg.norm(vec0))[:, None])
    if uniform and not res0.stable:
        return finish("stagnated-unstable", np.inf,
                      "initial iterate is unstable; uniform variant requires "
                      "stability along the trajectory")

    perturbed_retry = False
    gap = np.inf
    reduced_prev = None
    for ell in range(1, cfg.max_iter + 1):
        basis_dim = state.ell
        gamma_red = _reduced_gamma(fun, state, box)
        fam = ReducedFamily(fun, state.v)

        def objective(x, _fam=fam):
            rd = _minimize_reduced(_fam, x, cfg.inner_tol, None, cfg.gap_budget,
                                   uniform, polish_starts=cfg.eval_polish_starts)
            g, _ = _fam.grad(x, rd)
            return rd.value ** 2, 2.0 * rd.value * g

        # the inner maximization only needs accuracy commensurate with the
        # outer gap; the model overshoot gamma*r^2/2 sets the initial scale
        if reduced_prev is None:
            eig_tol = max(eig_tol_base, 1e-3 * 0.5 * gamma_red * half_diag_sq)
        else:
            eig_tol = max(eig_tol_base,
                          min(1e-2 * gap * max(reduced_prev, 1e-3),
                              0.1 * reduced_prev ** 2))

        x0 = None
        dt_reduced = 0.0
        for attempt in range(2):
            t1 = time.perf_counter()
            try:
                opt = eigopt.optimize(objective, box, gamma_red, tol=eig_tol,
                                      max_iter=cfg.eigopt_max_iter, x0=x0)
                x_next = opt.x_best
                rd_tight = _minimize_reduced(fam, x_next, cfg.inner_tol,
                                             max(cfg.gap_cert_tol, cfg.inner_tol),
                                             cfg.gap_budget, uniform)
                dt_reduced += time.perf_counter() - t1
                time_reduced_total += time.perf_counter() - t1
                break
            except (eigopt.ObjectiveError, np.linalg.LinAlgError) as exc:
                dt_reduced += time.perf_counter() - t1
                time_reduced_total += time.perf_counter() - t1
                if attempt == 1:
                    return finish("failed", gap, f"inner solver failed twice: {exc}")
                # retry once with a 4x finer inner tolerance
                cfg = SubspaceConfig(**{**cfg.__dict__, "inner_tol": cfg.inner_tol / 4.0})
        reduced_val = rd_tight.value
        reduced_prev = reduced_val

        t2 = time.perf_counter()
        res, full_val, z_next, vec = _probe_full(fun, x_next, cfg.inner_tol)
        n_full = 1
        stencil_info = []
        stencil_vecs = []
        if extended:
            h = float(np.linalg.norm(x_next - iterates[-1]))
            if h > 0.0:
                for e in _stencil_dirs(box.dim):
                    x_pq = box.clamp(x_next + h * e)
                    res_pq, _, z_pq, vec_pq = _probe_full(fun, x_pq, cfg.inner_tol)
                    stencil_info.append((x_pq, z_pq, res_pq.stable))
                    stencil_vecs.append(vec_pq)
                    n_full += 1
        dt_full = time.perf_counter() - t2
        time_full_total += dt_full

        gap = reduced_val - full_val
        if full_val > f_best:
            x_best, f_best = x_next.copy(), full_val
        rec = IterRecord(ell=ell, x=x_next.copy(), z=z_next, reduced_val=reduced_val,
                         full_val=full_val, stable=res.stable, basis_dim=basis_dim,
                         gamma_used=gamma_red, gap=gap, n_full_evals=n_full,
                         inner_certified=bool(opt.certified and rd_tight.certified),
                         time_reduced=dt_reduced, time_full=dt_full, stencil=stencil_info)
        records.append(rec)
        iterates.append(x_next.copy())
        z_points.append(z_next)

        if gap <= cfg.tol_gap:
            x_best, f_best = x_next.copy(), full_val
            return finish("converged", gap)
        if uniform and not res.stable:
            return finish("stagnated-unstable", gap,
                          "trajectory hit an unstable point; the imaginary-axis "
                          "reduction cannot interpolate there")

        repeat = any(np.linalg.norm(x_next - xj) <= REPEAT_TOL * (1.0 + np.linalg.norm(x_next))
                     for xj in iterates[:-1])
        if repeat:
            if perturbed_retry:
                return finish("stagnated", gap, "iterate repeated after perturbed restart")
            perturbed_retry = True
            x0 = box.clamp(box.midpoint + 0.25 * (box.upper - box.lower)
                           * np.cos(np.arange(1, box.dim + 1)))
        else:
            x0 = None

        dropped = 0
        state, drop = expand_basis(state, vec, cfg.drop_tol)
        dropped += int(drop)
        for vec_pq in stencil_vecs:
            state, drop = expand_basis(state, vec_pq, cfg.drop_tol)
            dropped += int(drop)
        rec.dropped = dropped
    return finish("max_iter", gap)


def run_basic(fun: ParamMatrixFun, box: Box, cfg: Optional[SubspaceConfig] = None) -> RunTrace:
    """Basic subspace framework: one interpolation vector per iteration."""
    cfg = cfg or SubspaceConfig()
    if cfg.variant != "basic":
        cfg = SubspaceConfig(**{**cfg.__dict__, "variant": "basic"})
    return _run(fun, box, cfg)


def run_extended(fun: ParamMatrixFun, box: Box, cfg: Optional[SubspaceConfig] = None) -> RunTrace:
    """Extended framework: also interpolates at d(d+1)/2 stencil points
    x + h e_pq around each maximizer (clamped to the box)."""
    cfg = cfg or SubspaceConfig(variant="extended")
    if cfg.variant != "extended":
        cfg = SubspaceConfig(**{**cfg.__dict__, "variant": "extended"})
    return _run(fun, box, cfg)


def run_uniform(fun: ParamMatrixFun, box: Box, cfg: Optional[SubspaceConfig] = None) -> RunTrace:
    """Imaginary-axis variant for uniformly stable families.  Stops with
    status ``stagnated-unstable`` as soon as an iterate is unstable."""
    cfg = cfg or SubspaceConfig(variant="uniform")
    if cfg.variant != "uniform":
        cfg = SubspaceConfig(**{**cfg.__dict__, "variant": "uniform"})
    return _run(fun, box, cfg)
