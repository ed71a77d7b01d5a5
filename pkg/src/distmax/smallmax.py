"""Global maximization of the squared distance to instability.

Wires the single-matrix distance computation and its analytic gradient
into the support-function optimizer: the objective is [D(A(x))]^2 with
gradient 2 D Re(u^H (dA/dx_s) v) at stable points and identically zero
on the open set where A(x) is strictly unstable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import eigopt
from .matmodel import Box, ParamMatrixFun, eval_deriv, eval_full, gamma_affine, gamma_general
from .stability import DistResult, distance_to_instability

__all__ = ["SmallMaxConfig", "objective_sq_full", "maximize_small"]


@dataclass(frozen=True)
class SmallMaxConfig:
    gamma: Optional[float] = None       # override; else affine/general bound
    tol: float = 1e-8
    max_iter: int = 300
    restrict_omega_nonneg: bool = False
    dist_tol: float = 1e-10
    gamma_grid: int = 20

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def objective_sq_full(fun: ParamMatrixFun, x, dist_tol: float = 1e-10):
    """Value, gradient and distance data of [D(A(x))]^2.

    At strictly unstable points the squared distance vanishes on an open
    neighborhood, so (0, 0) is returned exactly.  At stable points the
    gradient uses the consistent singular pair at the attaining shift.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    res = distance_to_instability(eval_full(fun, x), tol=dist_tol)
    if not res.stable:
        return 0.0, np.zeros(fun.dim_d), res
    d = res.dist
    u, v = res.triplet.u, res.triplet.v
    grad = np.empty(fun.dim_d)
    for s in range(1, fun.dim_d + 1):
        grad[s - 1] = 2.0 * d * np.vdot(u, eval_deriv(fun, x, s) @ v).real
    return d * d, grad, res


def pick_gamma(fun: ParamMatrixFun, box: Box, cfg: SmallMaxConfig) -> float:
    if cfg.gamma is not None:
        return float(cfg.gamma)
    if fun.affine:
        return gamma_affine(fun)
    return gamma_general(fun, box, cfg.gamma_grid)


def maximize_small(fun: ParamMatrixFun, box: Box,
                   cfg: Optional[SmallMaxConfig] = None,
                   trace: Optional[List[Tuple[np.ndarray, float, DistResult]]] = None
                   ) -> eigopt.OptResult:
    """Support-function maximization of [D(A(x))]^2 over the box.

    Certified for d <= 2 (exact envelope subproblems); for more
    parameters the multistart fallback is used and the result is flagged
    non-certified.  ``trace``, when given, collects (x, value, DistResult)
    for every objective evaluation.
    """
    cfg = cfg or SmallMaxConfig()
    if box.dim != fun.dim_d:
        raise ValueError("box dimension does not match the family")
    gamma = pick_gamma(fun, box, cfg)

    def objective(x):
        val, grad, res = objective_sq_full(fun, x, dist_tol=cfg.dist_tol)
        if trace is not None:
            trace.append((np.asarray(x, dtype=float).copy(), val, res))
        return val, grad

    return eigopt.optimize(objective, box, gamma, tol=cfg.tol, max_iter=cfg.max_iter)
