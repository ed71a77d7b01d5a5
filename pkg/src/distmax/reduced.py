"""Reduced distance objectives for the subspace frameworks.

One-sided restrictions A(x)V produce rectangular problems: the reduced
distance over the closed right half-plane min_{Re z >= 0} of
sigma_min(A^V(x) - zV), its imaginary-axis variant, gradients with
respect to the parameters, and curvature bounds of the reduced squared
objective.  A QR compression turns the tall n x ell problem into a
2 ell x ell one with identical singular values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize as sopt

from .matmodel import Box, ParamMatrixFun, _check_orthonormal, gamma_reduced_block
from .stability import SingularTriplet, _fix_phase

__all__ = [
    "ReducedRect",
    "ReducedDist",
    "ReducedFamily",
    "reduce_qr",
    "dist_reduced_cplus",
    "dist_reduced_imag",
    "grad_dist_reduced",
    "gamma_reduced_affine",
    "gamma_reduced_general",
]

# relative gap below which the smallest singular value is treated as multiple
SMOOTH_GAP_REL = 1e-8


@dataclass(frozen=True)
class ReducedRect:
    """QR compression of [V, A(x)V] = Q [[I, R_A], [0, R_B]].

    The singular values of [R_A - zI; R_B] coincide with those of
    A(x)V - zV for every z, so all reduced objectives operate on the
    small 2 ell x ell stack.
    """

    r_a: np.ndarray
    r_b: np.ndarray
    q: np.ndarray

    @property
    def ell(self) -> int:
        return self.r_a.shape[0]

    def stack(self, z: complex) -> np.ndarray:
        top = self.r_a - z * np.eye(self.ell)
        return np.concatenate([top, self.r_b], axis=0)

    def sigma_batch(self, zs: np.ndarray) -> np.ndarray:
        """sigma_min([R_A - zI; R_B]) for a batch of shifts."""
        zs = np.asarray(zs, dtype=complex).ravel()
        ell = self.ell
        m = zs.size
        stk = np.empty((m, 2 * ell, ell), dtype=complex)
        stk[:, :ell, :] = self.r_a[None, :, :]
        idx = np.arange(ell)
        stk[:, idx, idx] -= zs[:, None]
        stk[:, ell:, :] = self.r_b[None, :, :]
        return np.linalg.svd(stk, compute_uv=False)[:, -1]

    def sigma_square_batch(self, zs: np.ndarray) -> np.ndarray:
        """sigma_min(R_A - zI) for a batch of shifts (split lower bound)."""
        zs = np.asarray(zs, dtype=complex).ravel()
        ell = self.ell
        stk = np.broadcast_to(self.r_a, (zs.size, ell, ell)).copy()
        idx = np.arange(ell)
        stk[:, idx, idx] -= zs[:, None]
        return np.linalg.svd(stk, compute_uv=False)[:, -1]

    def sigma_rb(self) -> float:
        return float(np.linalg.svd(self.r_b, compute_uv=False)[-1])

    def norm_av(self) -> float:
        """||A(x)V||_2, equal to the norm of the compressed stack."""
        return float(np.linalg.norm(np.concatenate([self.r_a, self.r_b]), 2))


@dataclass(frozen=True)
class ReducedDist:
    """Reduced distance value with its minimizer and lifted triplet.

    ``theta`` is the ell-dimensional right singular vector of
    A^V(x) - z*V; ``u`` the n-dimensional left one; ``v_lifted = V theta``
    is its representative in the full space.  ``sv_gap_rel`` is the
    relative gap to the second smallest singular value at the minimizer.
    """

    value: float
    z_star: complex
    u: np.ndarray
    theta: np.ndarray
    v_lifted: np.ndarray
    certified: bool
    sv_gap_rel: float

    @property
    def triplet(self) -> SingularTriplet:
        return SingularTriplet(sigma=self.value, u=self.u, v=self.theta)


class ReducedFamily:
    """Restriction of a matrix family to a fixed basis V.

    Precomputes the products A_j V once, so repeated evaluations of the
    reduced objectives at different x cost only n ell-sized work.
    """

    def __init__(self, fun: ParamMatrixFun, v: np.ndarray, check: bool = True):
        self.fun = fun
        self.v = _check_orthonormal(v) if check else np.asarray(v, dtype=complex)
        self.ajv = [aj @ self.v for aj in fun.coeffs]

    def eval_av(self, x) -> np.ndarray:
        c = self.fun.fvals(x)
        out = c[0] * self.ajv[0]
        for cj, ajv in zip(c[1:], self.ajv[1:]):
            out = out + cj * ajv
        return out

    def rect(self, x) -> ReducedRect:
        av = self.eval_av(x)
        v = self.v
        r_a = v.conj().T @ av
        w = av - v @ r_a
        # one re-orthogonalization pass keeps Q2 orthogonal to V
        w -= v @ (v.conj().T @ w)
        q2, r_b = np.linalg.qr(w)
        q = np.concatenate([v, q2], axis=1)
        return ReducedRect(r_a=r_a, r_b=r_b, q=q)

    def grad(self, x, rd: "ReducedDist"):
        g = self.fun.fgrads(x)
        uh_ajv = [self.ajv[j].conj().T @ rd.u for j in range(len(self.ajv))]
        grad = np.zeros(self.fun.dim_d)
        for s in range(self.fun.dim_d):
            acc = 0j
            for j, uav in enumerate(uh_ajv):
                if g[j, s] != 0.0:
                    acc += g[j, s] * np.vdot(uav, rd.theta)
            grad[s] = acc.real
        smooth = bool(rd.sv_gap_rel > SMOOTH_GAP_REL)
        return grad, smooth


def reduce_qr(fun: ParamMatrixFun, x, v: np.ndarray) -> ReducedRect:
    """Block Gram-Schmidt step for [V, A(x)V].

    R_A = V^H A(x) V; the residual A(x)V - V R_A is orthonormalized into
    Q2 R_B, giving Q = [V, Q2] with 2 ell orthonormal columns.  Rank
    deficiency of the residual only makes R_B (nearly) singular, which
    is permitted.
    """
    return ReducedFamily(fun, v).rect(x)


def _sigma_and_grad(rect: ReducedRect, alpha: float, omega: float):
    """Smallest singular value of the stack at z = alpha + i omega and its
    gradient with respect to (alpha, omega)."""
    z = complex(alpha, omega)
    uu, ss, vh = np.linalg.svd(rect.stack(z))
    ell = rect.ell
    u = uu[:, ell - 1]
    th = vh[ell - 1, :].conj()
    ip = np.vdot(u[:ell], th)        # u_top^H theta
    return float(ss[-1]), np.array([-ip.real, ip.imag]), ss


def _polish(rect: ReducedRect, z0: complex, bound: float, omega_only: bool):
    """Local minimization of sigma_min from z0, projected to Re z >= 0."""

    if omega_only:
        def fun(t):
            s, g, _ = _sigma_and_grad(rect, 0.0, t[0])
            return s, np.array([g[1]])
        bounds = [(-bound, bound)]
        t0 = np.array([z0.imag])
    else:
        def fun(t):
            s, g, _ = _sigma_and_grad(rect, t[0], t[1])
            return s, g
        bounds = [(0.0, bound), (-bound, bound)]
        t0 = np.array([max(z0.real, 0.0), z0.imag])
    res = sopt.minimize(fun, t0, jac=True, method="L-BFGS-B", bounds=bounds,
                        options={"maxiter": 100, "gtol": 1e-12, "ftol": 1e-16})
    if omega_only:
        return complex(0.0, res.x[0]), float(res.fun)
    return complex(res.x[0], res.x[1]), float(res.fun)


def _certify_min(rect: ReducedRect, bound: float, incumbent: float, tol: float,
                 budget: int, omega_only: bool):
    """Lipschitz sweep: refine cells that could beat the incumbent by more
    than tol.  Returns (best value seen, its z, completed flag).

    Cells are pruned by the stronger of the plain Lipschitz bound and the
    Weyl split sigma(z)^2 >= sigma_min(R_A - zI)^2 + sigma_min(R_B)^2,
    which avoids grinding through flat minima of the combined function.
    """
    best, best_z = incumbent, None
    s_b = rect.sigma_rb()

    def lower_bounds(zs, vals, rad):
        plain = vals - rad
        sig_a = rect.sigma_square_batch(zs)
        split = np.sqrt(np.maximum(sig_a - rad, 0.0) ** 2 + s_b ** 2)
        return np.maximum(plain, split)

    if omega_only:
        edges = np.linspace(-bound, bound, 129)
        cells_z = (0.5 * (edges[:-1] + edges[1:])).astype(complex) * 1j
        cells_r = np.full(cells_z.shape, (edges[1] - edges[0]) / 2.0)
    else:
        ea = np.linspace(0.0, bound, 17)
        ew = np.linspace(-bound, bound, 33)
        aa, ww = np.meshgrid(0.5 * (ea[:-1] + ea[1:]), 0.5 * (ew[:-1] + ew[1:]),
                             indexing="ij")
        cells_z = (aa + 1j * ww).ravel()
        ha, hw = (ea[1] - ea[0]) / 2.0, (ew[1] - ew[0]) / 2.0
        cells_r = np.full(cells_z.shape, float(np.hypot(ha, hw)))
        cells_ha = np.full(cells_z.shape, ha)
        cells_hw = np.full(cells_z.shape, hw)
    cells_v = rect.sigma_batch(cells_z)
    evals = cells_z.size
    k = int(np.argmin(cells_v))
    if cells_v[k] < best:
        best, best_z = float(cells_v[k]), complex(cells_z[k])

    while True:
        keep = lower_bounds(cells_z, cells_v, cells_r) < best - tol
        if not np.any(keep):
            return best, best_z, True
        if omega_only:
            z, r = cells_z[keep], cells_r[keep]
            cells_z = np.concatenate([z - 1j * r / 2.0, z + 1j * r / 2.0])
            cells_r = np.concatenate([r / 2.0, r / 2.0])
        else:
            z = cells_z[keep]
            a, w = cells_ha[keep], cells_hw[keep]
            quad = [(+1, +1), (+1, -1), (-1, +1), (-1, -1)]
            cells_z = np.concatenate([z + sa * a / 2.0 + 1j * sw * w / 2.0
                                      for sa, sw in quad])
            cells_ha = np.tile(a / 2.0, 4)
            cells_hw = np.tile(w / 2.0, 4)
            cells_r = np.hypot(cells_ha, cells_hw)
        if evals + cells_z.size > budget:
            return best, best_z, False
        cells_v = rect.sigma_batch(cells_z)
        evals += cells_z.size
        k = int(np.argmin(cells_v))
        if cells_v[k] < best:
            best, best_z = float(cells_v[k]), complex(cells_z[k])


def _finalize(v, rect: ReducedRect, z_star: complex, certified: bool) -> ReducedDist:
    uu, ss, vh = np.linalg.svd(rect.stack(z_star))
    ell = rect.ell
    ur = uu[:, ell - 1]
    th = vh[ell - 1, :].conj()
    ur, th = _fix_phase(ur, th)
    u = rect.q @ ur
    gap_rel = float((ss[-2] - ss[-1]) / max(ss[-1], 1e-300)) if ell > 1 else np.inf
    return ReducedDist(value=float(ss[-1]), z_star=z_star, u=u, theta=th,
                       v_lifted=v @ th, certified=certified, sv_gap_rel=gap_rel)


def _minimize_reduced(fam: ReducedFamily, x, tol, cert_tol, budget, omega_only,
                      polish_starts=6):
    v = fam.v
    rect = fam.rect(x)
    bound = 2.0 * rect.norm_av() + 1e-300

    # candidate minimizers: axis sweep, 2-d coarse grid, square-part eigenvalues
    cand = [complex(0.0, w) for w in np.linspace(-bound, bound, 65)]
    if not omega_only:
        for al in np.linspace(bound / 16.0, bound, 8):
            cand.extend(complex(al, w) for w in np.linspace(-bound, bound, 17))
        for lam in np.linalg.eigvals(rect.r_a):
            if lam.real >= -1e-12 and abs(lam) <= bound:
                cand.append(complex(max(lam.real, 0.0), lam.imag))
    cand = np.array(cand)
    vals = rect.sigma_batch(cand)
    order = np.argsort(vals)
    incumbent, inc_z = np.inf, complex(cand[int(order[0])])
    for idx in order[:polish_starts]:
        z, s = _polish(rect, complex(cand[int(idx)]), bound, omega_only)
        if s < incumbent:
            incumbent, inc_z = s, z

    if cert_tol is None:
        # grid + polish only; the coarse grid gives no formal certificate
        return _finalize(v, rect, inc_z, False)

    cert_tol = max(cert_tol, 1e-12)
    best, best_z, completed = _certify_min(rect, bound, incumbent, cert_tol,
                                           budget, omega_only)
    if best < incumbent and best_z is not None:
        z2, s2 = _polish(rect, best_z, bound, omega_only)
        incumbent, inc_z = (s2, z2) if s2 <= best else (best, best_z)
    return _finalize(v, rect, inc_z, completed)


def dist_reduced_cplus(fun: ParamMatrixFun, x, v: np.ndarray, tol: float = 1e-9,
                       cert_tol: Optional[float] = "tol", budget: int = 300_000,
                       polish_starts: int = 6) -> ReducedDist:
    """Reduced distance D^V(A(x)) = min over Re z >= 0 of sigma_min(A^V(x) - zV).

    The search region {Re z in [0, 2||A^V||], |Im z| <= 2||A^V||} contains
    every minimizer; a Lipschitz grid certifies the incumbent to cert_tol
    (default tol) and local quasi-Newton descent polishes it.  Passing
    ``cert_tol=None`` skips the certification sweep (grid + polish only);
    a budget overrun leaves the polished value with ``certified`` unset.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cert_tol = tol if cert_tol == "tol" else cert_tol
    return _minimize_reduced(ReducedFamily(fun, v), x, tol, cert_tol, budget,
                             omega_only=False, polish_starts=polish_starts)


def dist_reduced_imag(fun: ParamMatrixFun, x, v: np.ndarray, tol: float = 1e-9,
                      cert_tol: Optional[float] = "tol", budget: int = 300_000,
                      polish_starts: int = 6) -> ReducedDist:
    """Imaginary-axis reduced distance min over real omega of
    sigma_min(A^V(x) - i omega V), certified by a 1-d Lipschitz grid."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    cert_tol = tol if cert_tol == "tol" else cert_tol
    return _minimize_reduced(ReducedFamily(fun, v), x, tol, cert_tol, budget,
                             omega_only=True, polish_starts=polish_starts)


def grad_dist_reduced(fun: ParamMatrixFun, x, v: np.ndarray, rd: ReducedDist):
    """Gradient of the reduced distance at (x, V).

    grad_s = Re(u^H (sum_j (grad f_j(x))_s A_j V) theta).  Returns
    (gradient, smooth): ``smooth`` is false when the smallest singular
    value at the minimizer is nearly multiple, in which case the gradient
    of the returned singular-value branch is still provided.
    """
    return ReducedFamily(fun, v).grad(x, rd)


def gamma_reduced_affine(fun: ParamMatrixFun, v: np.ndarray) -> float:
    """Curvature bound of the reduced squared distance for affine families:
    largest eigenvalue of the block matrix built from B_j V."""
    if not fun.affine:
        raise ValueError("family is not affine; use gamma_reduced_general")
    v = _check_orthonormal(v)
    terms_v = [b @ v for b in fun.coeffs[1:]]
    return gamma_reduced_block(terms_v)


def gamma_reduced_general(fun: ParamMatrixFun, v: np.ndarray, box: Box,
                          grid_per_dim: int = 20) -> float:
    """Grid-estimated curvature bound with projected coefficient norms."""
    from .matmodel import gamma_general
    v = _check_orthonormal(v)
    norms = [float(np.linalg.norm(a @ v, 2)) for a in fun.coeffs]
    return gamma_general(fun, box, grid_per_dim, coeff_norms=norms)
