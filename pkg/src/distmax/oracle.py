"""Independent certified brute-force computations.

Adaptive Lipschitz grids over frequency / complex-plane regions and a
direct maximin enumeration over the parameter box.  These paths share no
code with the fast solvers they validate; they rest only on the
1-Lipschitz dependence of singular values on the shift (Weyl) and on an
explicit parameter Lipschitz constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .matmodel import Box, ParamMatrixFun, eval_full
from .stability import distance_to_instability

__all__ = [
    "GridCertificate",
    "certified_min_sigma_imagaxis",
    "certified_min_sigma_cplus",
    "brute_max_distance",
    "param_lipschitz",
]


class OracleBudgetError(RuntimeError):
    """Certification exceeded its evaluation budget."""


class OracleCostError(ValueError):
    """Problem size violates the brute-force cost guard."""


@dataclass(frozen=True)
class GridCertificate:
    """Certified grid extremum: error bounded by lipschitz_const * radius."""

    value: float
    point: np.ndarray
    radius: float
    lipschitz_const: float
    evals: int

    @property
    def error_bound(self) -> float:
        return self.lipschitz_const * self.radius


def _sigma_min_shift_batch(m: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    stack = np.broadcast_to(m, (omegas.size, n, n)).astype(complex).copy()
    idx = np.arange(n)
    stack[:, idx, idx] -= 1j * omegas[:, None]
    return np.linalg.svd(stack, compute_uv=False)[:, -1]


def certified_min_sigma_imagaxis(m: np.ndarray, tol: float = 1e-8,
                                 budget: int = 5_000_000) -> GridCertificate:
    """Certified min of sigma_min(M - i omega I) over omega in R.

    Any minimizer lies in |omega| <= 2 ||M||_2; the adaptive bisection
    grid discards intervals whose Lipschitz lower bound cannot improve
    the incumbent by more than tol, so the returned value is within tol
    of the global minimum.  Real input is folded to omega >= 0, exact by
    the conjugation symmetry of its singular value function.
    """
    m = np.asarray(m, dtype=complex)
    bound = 2.0 * float(np.linalg.norm(m, 2))
    if bound == 0.0:
        return GridCertificate(0.0, np.array([0.0]), tol, 1.0, 1)
    lo = 0.0 if np.allclose(m.imag, 0.0) else -bound
    edges = np.linspace(lo, bound, 65)
    cells_c = 0.5 * (edges[:-1] + edges[1:])
    cells_r = np.full(cells_c.shape, (edges[1] - edges[0]) / 2.0)
    cells_v = _sigma_min_shift_batch(m, cells_c)
    evals = cells_c.size
    k = int(np.argmin(cells_v))
    best, best_w = float(cells_v[k]), float(cells_c[k])

    while True:
        keep = cells_v - cells_r < best - tol
        if not np.any(keep):
            break
        c, r = cells_c[keep], cells_r[keep]
        child_c = np.concatenate([c - r / 2.0, c + r / 2.0])
        child_r = np.concatenate([r / 2.0, r / 2.0])
        child_v = _sigma_min_shift_batch(m, child_c)
        evals += child_c.size
        if evals > budget:
            raise OracleBudgetError("imaginary-axis certification exceeded budget")
        k = int(np.argmin(child_v))
        if child_v[k] < best:
            best, best_w = float(child_v[k]), float(child_c[k])
        cells_c, cells_r, cells_v = child_c, child_r, child_v
    return GridCertificate(value=best, point=np.array([best_w]), radius=tol,
                           lipschitz_const=1.0, evals=evals)


def certified_min_sigma_cplus(matfun: Callable[[complex], np.ndarray], bound: float,
                              tol: float = 1e-6, budget: int = 5_000_000) -> GridCertificate:
    """Certified min of sigma_min(matfun(z)) over the closed right half-plane.

    ``matfun`` maps z to the tall matrix F(z) = A^V - z V, which is
    1-Lipschitz in z; ``bound`` must enclose every minimizer
    (>= 2 ||A^V||_2), so the search region is {0 <= Re z <= bound,
    |Im z| <= bound}.  Cells are pruned by the stronger of the plain
    Lipschitz bound and a Weyl-type split: with A^V = V S + W,
    V^H W = 0, one has sigma(z)^2 >= sigma_min(S - zI)^2 + sigma_min(W)^2,
    which keeps refinement cheap around smooth interior minima.
    """
    f0 = np.asarray(matfun(0.0), dtype=complex)
    f1 = np.asarray(matfun(1.0), dtype=complex)
    v = f0 - f1                       # F is linear in z with slope -V
    s_mat = v.conj().T @ f0
    w_mat = f0 - v @ s_mat
    s_b = float(np.linalg.svd(w_mat, compute_uv=False)[-1])
    ell = s_mat.shape[0]

    def batch(zs: np.ndarray):
        stack = np.stack([np.asarray(matfun(complex(z)), dtype=complex) for z in zs])
        vals = np.linalg.svd(stack, compute_uv=False)[:, -1]
        small = np.broadcast_to(s_mat, (zs.size, ell, ell)).copy()
        idx = np.arange(ell)
        small[:, idx, idx] -= zs[:, None]
        sig_a = np.linalg.svd(small, compute_uv=False)[:, -1]
        return vals, sig_a

    def lower_bounds(vals, sig_a, rad):
        plain = vals - rad
        split = np.sqrt(np.maximum(sig_a - rad, 0.0) ** 2 + s_b ** 2)
        return np.maximum(plain, split)

    ea = np.linspace(0.0, bound, 17)
    ew = np.linspace(-bound, bound, 33)
    ca, cw = 0.5 * (ea[:-1] + ea[1:]), 0.5 * (ew[:-1] + ew[1:])
    ha, hw = (ea[1] - ea[0]) / 2.0, (ew[1] - ew[0]) / 2.0
    aa, ww = np.meshgrid(ca, cw, indexing="ij")
    cells_z = (aa + 1j * ww).ravel()
    cells_ha = np.full(cells_z.shape, ha)
    cells_hw = np.full(cells_z.shape, hw)
    cells_v, cells_sa = batch(cells_z)
    evals = cells_z.size
    k = int(np.argmin(cells_v))
    best, best_z = float(cells_v[k]), complex(cells_z[k])

    while True:
        rad = np.hypot(cells_ha, cells_hw)
        keep = lower_bounds(cells_v, cells_sa, rad) < best - tol
        if not np.any(keep):
            break
        z, a, w = cells_z[keep], cells_ha[keep], cells_hw[keep]
        quad = [(+1, +1), (+1, -1), (-1, +1), (-1, -1)]
        child_z = np.concatenate([z + sa * a / 2.0 + 1j * sw * w / 2.0 for sa, sw in quad])
        child_ha = np.tile(a / 2.0, 4)
        child_hw = np.tile(w / 2.0, 4)
        child_v, child_sa = batch(child_z)
        evals += child_z.size
        if evals > budget:
            raise OracleBudgetError("right-half-plane certification exceeded budget")
        k = int(np.argmin(child_v))
        if child_v[k] < best:
            best, best_z = float(child_v[k]), complex(child_z[k])
        cells_z, cells_ha, cells_hw = child_z, child_ha, child_hw
        cells_v, cells_sa = child_v, child_sa
    return GridCertificate(value=best, point=np.array([best_z.real, best_z.imag]),
                           radius=tol, lipschitz_const=1.0, evals=evals)


def param_lipschitz(fun: ParamMatrixFun, box: Box, grid_per_dim: int = 10) -> float:
    """Bound zeta = sum_j gamma_j ||A_j||_2 on the x-Lipschitz constant of
    the distance; f_j Lipschitz constants are taken as the max gradient
    norm on a 10x finer grid, inflated by 1.1."""
    axes = [np.linspace(lo, hi, 10 * grid_per_dim) if hi > lo else np.array([lo])
            for lo, hi in zip(box.lower, box.upper)]
    zeta = 0.0
    for f, nrm in zip(fun.funcs, fun.coeff_norms):
        worst = 0.0
        for point in np.ndindex(*[len(a) for a in axes]):
            x = np.array([axes[i][point[i]] for i in range(box.dim)])
            worst = max(worst, float(np.linalg.norm(np.asarray(f.grad(x), dtype=float))))
        zeta += 1.1 * worst * nrm
    return zeta


def brute_max_distance(fun: ParamMatrixFun, box: Box, steps_per_dim: int = 33,
                       tol: float = 1e-5, dist_tol: float = 1e-9,
                       max_evals: int = 400_000) -> GridCertificate:
    """Certified grid maximization of D(A(x)) over the box.

    Branch-and-bound on x-cells: a cell is discarded once its Lipschitz
    upper bound (center value + zeta * radius) cannot beat the incumbent;
    surviving cells are split until their radius drops below tol.  The
    returned value is the grid maximum, a lower bound on the true maximum
    with certified error <= zeta * tol.
    """
    if box.dim > 2:
        raise OracleCostError("brute-force oracle limited to d <= 2")
    if fun.dim_n > 120:
        raise OracleCostError("brute-force oracle limited to n <= ~100")
    zeta = param_lipschitz(fun, box)

    def dist_at(x: np.ndarray) -> float:
        return distance_to_instability(eval_full(fun, x), tol=dist_tol).dist

    axes, halves = [], []
    for lo, hi in zip(box.lower, box.upper):
        if hi > lo:
            edges = np.linspace(lo, hi, steps_per_dim + 1)
            axes.append(0.5 * (edges[:-1] + edges[1:]))
            halves.append((edges[1] - edges[0]) / 2.0)
        else:
            axes.append(np.array([lo]))
            halves.append(0.0)
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    hvec0 = np.array(halves)

    evals = 0
    best, best_x = -np.inf, centers[0]
    active = []
    for c in centers:
        v = dist_at(c)
        evals += 1
        if v > best:
            best, best_x = v, c
        active.append((c, hvec0, v))

    while active:
        nxt = []
        for c, hvec, v in active:
            r = float(np.linalg.norm(hvec))
            if v + zeta * r <= best or r <= tol:
                continue
            for s in np.ndindex(*[2] * box.dim):
                cc = c + (np.array(s) - 0.5) * hvec
                vv = dist_at(cc)
                evals += 1
                if evals > max_evals:
                    raise OracleBudgetError("brute-force maximization exceeded budget")
                if vv > best:
                    best, best_x = vv, cc
                nxt.append((cc, hvec / 2.0, vv))
        active = nxt
    return GridCertificate(value=float(best), point=np.asarray(best_x, dtype=float),
                           radius=tol, lipschitz_const=zeta, evals=evals)
