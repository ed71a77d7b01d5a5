"""Globally convergent piecewise-quadratic maximization over a box.

Maintains quadratic upper-support pieces q(x; x_k) with a shared global
curvature bound gamma and repeatedly maximizes their lower envelope
min_k q(x; x_k), which majorizes the objective whenever gamma is valid.
The envelope maximum minus the best observed objective value is a
certificate of global optimality.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.optimize as sopt

from .matmodel import Box

__all__ = ["QuadPiece", "SupportModel", "OptResult", "add_piece",
           "maximize_model", "optimize", "ObjectiveError"]

# accept an envelope candidate within this slack of the refined bound
SUBPROBLEM_TOL = 1e-9
SUBPROBLEM_BUDGET = 400_000


class ObjectiveError(RuntimeError):
    """Objective callback failed; carries the partial iteration history."""

    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class QuadPiece:
    """Quadratic piece q(x; x_k) = f_k + g_k^T (x - x_k) + (gamma/2)||x - x_k||^2."""

    x_k: np.ndarray
    f_k: float
    g_k: np.ndarray
    gamma: float

    def value(self, x: np.ndarray) -> float:
        dx = np.asarray(x, dtype=float) - self.x_k
        return float(self.f_k + self.g_k @ dx + 0.5 * self.gamma * (dx @ dx))


@dataclass(frozen=True)
class SupportModel:
    """Lower envelope of quadratic upper-support pieces over a box."""

    pieces: tuple
    box: Box
    gamma: float

    def __len__(self) -> int:
        return len(self.pieces)

    def _arrays(self):
        xk = np.stack([p.x_k for p in self.pieces])
        fk = np.array([p.f_k for p in self.pieces])
        gk = np.stack([p.g_k for p in self.pieces])
        return xk, fk, gk

    def value_batch(self, pts: np.ndarray) -> np.ndarray:
        """Envelope values at a batch of points, shape (m, d) -> (m,)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.pieces:
            return np.full(pts.shape[0], np.inf)
        xk, fk, gk = self._arrays()
        diff = pts[:, None, :] - xk[None, :, :]          # (m, k, d)
        vals = fk[None, :] + np.einsum("mkd,kd->mk", diff, gk) \
            + 0.5 * self.gamma * np.einsum("mkd,mkd->mk", diff, diff)
        return vals.min(axis=1)

    def value(self, x: np.ndarray) -> float:
        return float(self.value_batch(np.asarray(x, dtype=float)[None, :])[0])

    def active_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the piece active at x (arbitrary among ties)."""
        x = np.asarray(x, dtype=float)
        vals = [p.value(x) for p in self.pieces]
        p = self.pieces[int(np.argmin(vals))]
        return p.g_k + self.gamma * (x - p.x_k)


@dataclass
class OptResult:
    """Outcome of the support-function maximization loop."""

    x_best: np.ndarray
    f_best: float
    model_max: float
    gap: float
    iterations: int
    history: List[Tuple[np.ndarray, float, float]] = field(default_factory=list)
    certified: bool = True
    status: str = "converged"


def empty_model(box: Box, gamma: float) -> SupportModel:
    if gamma < 0:
        raise ValueError("curvature bound gamma must be nonnegative")
    return SupportModel(pieces=(), box=box, gamma=gamma)


def add_piece(model: SupportModel, x_k, f_k: float, g_k) -> SupportModel:
    """Return the model refined with the piece anchored at x_k."""
    x_k = np.atleast_1d(np.asarray(x_k, dtype=float))
    g_k = np.atleast_1d(np.asarray(g_k, dtype=float))
    if not model.box.contains(x_k, tol=1e-9):
        raise ValueError("piece anchor lies outside the box")
    piece = QuadPiece(x_k=x_k, f_k=float(f_k), g_k=g_k, gamma=model.gamma)
    return replace(model, pieces=model.pieces + (piece,))


def _maximize_1d(model: SupportModel) -> Tuple[np.ndarray, float]:
    """Exact 1-d envelope maximization by breakpoint enumeration.

    Pieces share the curvature gamma, so pairwise differences are affine
    and each pair intersects at most once; the envelope is piecewise
    convex with breakpoints only at those intersections, hence its
    maximum sits at a breakpoint or a box endpoint.
    """
    lo, hi = float(model.box.lower[0]), float(model.box.upper[0])
    xk = np.array([p.x_k[0] for p in model.pieces])
    fk = np.array([p.f_k for p in model.pieces])
    gk = np.array([p.g_k[0] for p in model.pieces])
    gamma = model.gamma
    # q_k(x) = gamma/2 x^2 + b_k x + c_k
    b = gk - gamma * xk
    c = fk - gk * xk + 0.5 * gamma * xk ** 2
    cand = [lo, hi]
    k = len(xk)
    scale = 1.0 + np.abs(b).max()
    for i in range(k):
        for j in range(i + 1, k):
            db = b[i] - b[j]
            if abs(db) > 1e-15 * scale:
                t = (c[j] - c[i]) / db
                if lo < t < hi:
                    cand.append(float(t))
    cand = np.array(sorted(set(cand)))
    vals = model.value_batch(cand[:, None])
    best = vals.max()
    # lexicographically smallest maximizer for determinism
    x = cand[int(np.flatnonzero(vals >= best)[0])]
    return np.array([x]), float(best)


def _maximize_2d(model: SupportModel) -> Tuple[np.ndarray, float, bool]:
    """Certified branch-and-bound maximization of the 2-d envelope.

    Upper bound on a rectangle: min over pieces of the piece maximum,
    which convexity puts at a corner.  Cells that cannot beat the
    incumbent by more than the subproblem slack are discarded.
    """
    lo, hi = model.box.lower, model.box.upper
    xk, fk, gk = model._arrays()
    gamma = model.gamma

    def piece_vals(pts: np.ndarray) -> np.ndarray:
        diff = pts[:, None, :] - xk[None, :, :]
        return fk[None, :] + np.einsum("mkd,kd->mk", diff, gk) \
            + 0.5 * gamma * np.einsum("mkd,mkd->mk", diff, diff)

    n0 = 8
    ex = np.linspace(lo[0], hi[0], n0 + 1)
    ey = np.linspace(lo[1], hi[1], n0 + 1)
    cx = 0.5 * (ex[:-1] + ex[1:])
    cy = 0.5 * (ey[:-1] + ey[1:])
    hx, hy = (ex[1] - ex[0]) / 2.0, (ey[1] - ey[0]) / 2.0
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    halves = np.tile(np.array([[hx, hy]]), (centers.shape[0], 1))

    best = -np.inf
    best_x = centers[0]
    evals = 0
    certified = True

    def process(cts: np.ndarray, hvs: np.ndarray):
        nonlocal best, best_x, evals
        m = cts.shape[0]
        signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        corners = cts[:, None, :] + signs[None, :, :] * hvs[:, None, :]
        pts = np.concatenate([cts[:, None, :], corners], axis=1).reshape(-1, 2)
        pv = piece_vals(pts)                      # (5m, k)
        env = pv.min(axis=1)
        evals += pts.shape[0]
        kbest = int(np.argmax(env))
        if env[kbest] > best:
            best = float(env[kbest])
            best_x = pts[kbest].copy()
        ub = pv.reshape(m, 5, -1).max(axis=1).min(axis=1)   # min_k max_corner q_k
        return ub

    ub = process(centers, halves)
    max_slack = 0.0
    while True:
        slack = SUBPROBLEM_TOL * max(1.0, abs(best))
        keep = ub > best + slack
        max_slack = max(max_slack, slack)
        if not np.any(keep):
            break
        cts, hvs = centers[keep], halves[keep]
        signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        centers = (cts[:, None, :] + signs[None, :, :] * hvs[:, None, :] / 2.0).reshape(-1, 2)
        halves = np.repeat(hvs / 2.0, 4, axis=0)
        if evals + 5 * centers.shape[0] > SUBPROBLEM_BUDGET:
            certified = False
            break
        ub = process(centers, halves)
    return best_x, float(best + max_slack), certified


def _maximize_multistart(model: SupportModel, starts_per_dim: int = 50):
    """Local-ascent fallback for d >= 3; not a certified solution."""
    d = model.box.dim
    rng = np.random.default_rng(0)
    n = starts_per_dim * d
    # latin hypercube sample of starting points
    u = (rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T + rng.random((n, d))) / n
    starts = model.box.lower + u * (model.box.upper - model.box.lower)
    best, best_x = -np.inf, model.box.midpoint

    def neg(x):
        return -model.value(x), -model.active_grad(x)

    for x0 in starts:
        res = sopt.minimize(neg, x0, jac=True, method="L-BFGS-B",
                            bounds=list(zip(model.box.lower, model.box.upper)),
                            options={"maxiter": 200})
        v = -res.fun
        if v > best:
            best, best_x = v, res.x
    return np.asarray(best_x), float(best), False


def maximize_model(model: SupportModel):
    """Maximize the envelope over the box.

    Returns (x, val, certified); exact for d = 1, certified to the
    subproblem slack for d = 2, and a flagged multistart heuristic for
    d >= 3.
    """
    if len(model) == 0:
        raise ValueError("cannot maximize an empty model")
    d = model.box.dim
    if d == 1:
        x, val = _maximize_1d(model)
        return x, val, True
    if d == 2:
        return _maximize_2d(model)
    return _maximize_multistart(model)


class _Envelope1D:
    """Incremental exact 1-d envelope maximizer.

    Because all pieces share the curvature, the candidate set (box
    endpoints plus pairwise parabola intersections) only grows by the
    new piece's intersections each iteration; envelope values at old
    candidates are min-updated in O(k).
    """

    def __init__(self, box: Box, gamma: float):
        self.lo, self.hi = float(box.lower[0]), float(box.upper[0])
        self.gamma = gamma
        self.b = np.empty(0)
        self.c = np.empty(0)
        self.cands = np.array([self.lo, self.hi])
        self.vals = np.full(2, np.inf)

    def _q(self, b, c, x):
        return 0.5 * self.gamma * x ** 2 + b * x + c

    def add(self, x_k: float, f_k: float, g_k: float):
        b_new = g_k - self.gamma * x_k
        c_new = f_k - g_k * x_k + 0.5 * self.gamma * x_k ** 2
        self.vals = np.minimum(self.vals, self._q(b_new, c_new, self.cands))
        if self.b.size:
            db = b_new - self.b
            scale = 1.0 + max(abs(b_new), np.abs(self.b).max())
            ok = np.abs(db) > 1e-15 * scale
            t = (self.c[ok] - c_new) / db[ok]
            t = t[(t > self.lo) & (t < self.hi)]
            if t.size:
                new_vals = (0.5 * self.gamma * t[:, None] ** 2
                            + np.outer(t, np.append(self.b, b_new))
                            + np.append(self.c, c_new)[None, :]).min(axis=1)
                self.cands = np.append(self.cands, t)
                self.vals = np.append(self.vals, new_vals)
        self.b = np.append(self.b, b_new)
        self.c = np.append(self.c, c_new)

    def argmax(self):
        best = self.vals.max()
        near = np.flatnonzero(self.vals >= best)
        x = self.cands[near].min()
        return np.array([x]), float(best)


def optimize(objective: Callable, box: Box, gamma: float, tol: float = 1e-8,
             max_iter: int = 200, x0: Optional[np.ndarray] = None) -> OptResult:
    """Support-function maximization loop.

    ``objective(x)`` must return ``(value, gradient)``.  Starting from
    the box midpoint, the envelope of accumulated pieces is maximized,
    the objective is evaluated there and a new piece is added; the loop
    stops when the certificate gap model_max - f_best drops to tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    model = empty_model(box, gamma)
    inc = _Envelope1D(box, gamma) if box.dim == 1 else None
    x = box.midpoint if x0 is None else box.clamp(np.asarray(x0, dtype=float))
    history: List[Tuple[np.ndarray, float, float]] = []
    f_best, x_best = -np.inf, x
    model_max = np.inf
    certified = True
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        try:
            val, grad = objective(x)[:2]
        except Exception as exc:
            raise ObjectiveError(f"objective evaluation failed at x={x!r}: {exc}",
                                 history) from exc
        val = float(val)
        if val > f_best:
            f_best, x_best = val, x.copy()
        if inc is not None:
            inc.add(float(x[0]), val, float(np.atleast_1d(grad)[0]))
        else:
            model = add_piece(model, x, val, grad)
        gap = model_max - f_best
        history.append((x.copy(), val, float(gap)))
        if gap <= tol:
            status = "converged"
            break
        if inc is not None:
            x, model_max = inc.argmax()
        else:
            x, model_max, cert = maximize_model(model)
            certified = certified and cert
    return OptResult(x_best=x_best, f_best=f_best, model_max=float(model_max),
                     gap=float(model_max - f_best), iterations=it, history=history,
                     certified=certified, status=status)
