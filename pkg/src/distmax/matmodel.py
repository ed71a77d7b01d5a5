"""Parameter-dependent matrix families A(x) = sum_j f_j(x) A_j.

Holds the coefficient matrices together with the scalar functions (and
their derivatives), evaluates the family, its parameter derivatives and
one-sided restrictions A(x) V, and produces global curvature bounds gamma
for the squared-distance objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ScalarFun",
    "ParamMatrixFun",
    "Box",
    "eval_full",
    "eval_deriv",
    "eval_reduced",
    "gamma_affine",
    "gamma_general",
]


@dataclass(frozen=True)
class ScalarFun:
    """Scalar function f : R^d -> R with supplied derivatives.

    ``value(x)`` returns a float, ``grad(x)`` a d-vector and ``hess(x)``
    a (d, d) matrix.  The Hessian may be omitted; curvature bounds that
    need it will refuse to run rather than assume zero.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _const_one(d: int) -> ScalarFun:
    return ScalarFun(
        value=lambda x: 1.0,
        grad=lambda x: np.zeros(d),
        hess=lambda x: np.zeros((d, d)),
    )


def _coordinate(j: int, d: int) -> ScalarFun:
    e = np.zeros(d)
    e[j] = 1.0
    return ScalarFun(
        value=lambda x, j=j: float(x[j]),
        grad=lambda x, e=e: e.copy(),
        hess=lambda x: np.zeros((d, d)),
    )


@dataclass(frozen=True)
class Box:
    """Compact box {x : lower <= x <= upper} of admissible parameters."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be d-vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box is empty: lower > upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lower), self.upper)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True)
class ParamMatrixFun:
    """Matrix family A(x) = sum_{j=1}^kappa f_j(x) A_j.

    ``coeffs`` are square complex matrices of a common order n, ``funcs``
    the matching scalar functions of a d-dimensional parameter.  The
    ``affine`` flag marks the special form A(x) = B_0 + sum_j x_j B_j
    (kappa = d + 1), which admits an exact curvature bound.  Instances
    are immutable and safe to share between threads.
    """

    coeffs: tuple
    funcs: tuple
    dim_d: int
    affine: bool = False
    coeff_norms: tuple = field(default=None)
    is_real: bool = field(default=None)

    def __post_init__(self):
        mats = tuple(np.asarray(a) for a in self.coeffs)
        if not mats:
            raise ValueError("at least one coefficient matrix required")
        n = mats[0].shape[0]
        for a in mats:
            if a.ndim != 2 or a.shape != (n, n):
                raise ValueError("all coefficient matrices must be square of equal order")
        if len(self.funcs) != len(mats):
            raise ValueError("number of scalar functions must match number of matrices")
        real = all(np.isrealobj(a) or np.allclose(a.imag, 0.0) for a in mats)
        mats = tuple(a.astype(complex) for a in mats)
        object.__setattr__(self, "coeffs", mats)
        object.__setattr__(self, "funcs", tuple(self.funcs))
        # dense spectral norms cached once; desk-scale n keeps this cheap
        norms = tuple(float(np.linalg.norm(a, 2)) for a in mats)
        object.__setattr__(self, "coeff_norms", norms)
        object.__setattr__(self, "is_real", real)

    @property
    def kappa(self) -> int:
        return len(self.coeffs)

    @property
    def dim_n(self) -> int:
        return self.coeffs[0].shape[0]

    @classmethod
    def from_affine(cls, b0: np.ndarray, terms: Sequence[np.ndarray]) -> "ParamMatrixFun":
        """Build the affine family B_0 + sum_j x_j B_j (d = len(terms))."""
        d = len(terms)
        funcs = [_const_one(d)] + [_coordinate(j, d) for j in range(d)]
        return cls(coeffs=tuple([b0] + list(terms)), funcs=tuple(funcs), dim_d=d, affine=True)

    @classmethod
    def constant(cls, a: np.ndarray, dim_d: int = 1) -> "ParamMatrixFun":
        """The x-independent family A(x) = A."""
        return cls(coeffs=(a,), funcs=(_const_one(dim_d),), dim_d=dim_d, affine=False)

    def _check_x(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim_d,):
            raise ValueError(f"parameter has dimension {x.size}, expected {self.dim_d}")
        if not np.all(np.isfinite(x)):
            raise ValueError("parameter must be finite")
        return x

    def fvals(self, x) -> np.ndarray:
        x = self._check_x(x)
        return np.array([f.value(x) for f in self.funcs], dtype=float)

    def fgrads(self, x) -> np.ndarray:
        x = self._check_x(x)
        return np.array([np.asarray(f.grad(x), dtype=float) for f in self.funcs])


def eval_full(fun: ParamMatrixFun, x) -> np.ndarray:
    """Evaluate A(x) = sum_j f_j(x) A_j as a dense complex matrix."""
    c = fun.fvals(x)
    out = np.zeros((fun.dim_n, fun.dim_n), dtype=complex)
    for cj, aj in zip(c, fun.coeffs):
        out += cj * aj
    return out


def eval_deriv(fun: ParamMatrixFun, x, s: int) -> np.ndarray:
    """Partial derivative dA/dx_s (x) = sum_j (grad f_j(x))_s A_j, s is 1-based."""
    if not 1 <= s <= fun.dim_d:
        raise ValueError(f"derivative index {s} out of range 1..{fun.dim_d}")
    g = fun.fgrads(x)[:, s - 1]
    out = np.zeros((fun.dim_n, fun.dim_n), dtype=complex)
    for gj, aj in zip(g, fun.coeffs):
        if gj != 0.0:
            out += gj * aj
    return out


def _check_orthonormal(v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim == 1:
        v = v[:, None]
    gram_dev = np.linalg.norm(v.conj().T @ v - np.eye(v.shape[1]))
    if gram_dev > tol:
        raise ValueError(f"basis is not orthonormal: Gram deviation {gram_dev:.3e}")
    return v


def eval_reduced(fun: ParamMatrixFun, x, v: np.ndarray) -> np.ndarray:
    """One-sided restriction A^V(x) = sum_j f_j(x) A_j V for orthonormal V."""
    v = _check_orthonormal(v)
    c = fun.fvals(x)
    out = np.zeros((fun.dim_n, v.shape[1]), dtype=complex)
    for cj, aj in zip(c, fun.coeffs):
        out += cj * (aj @ v)
    return out


def _affine_terms(fun: ParamMatrixFun):
    if not fun.affine:
        raise ValueError("family is not affine; use gamma_general")
    return fun.coeffs[1:]


def _gamma_block_matrix(terms) -> np.ndarray:
    d = len(terms)
    ell = terms[0].shape[1]
    blocks = np.zeros((d * ell, d * ell), dtype=complex)
    for p in range(d):
        for q in range(d):
            bpq = terms[p].conj().T @ terms[q] + terms[q].conj().T @ terms[p]
            blocks[p * ell:(p + 1) * ell, q * ell:(q + 1) * ell] = bpq
    return blocks


def gamma_affine(fun: ParamMatrixFun) -> float:
    """Exact curvature bound for affine families.

    Largest eigenvalue of the d*n x d*n Hermitian block matrix with
    (p, q) block B_p^H B_q + B_q^H B_p; bounds lambda_max of the Hessian
    of the squared distance wherever that function is twice differentiable.
    """
    terms = _affine_terms(fun)
    w = np.linalg.eigvalsh(_gamma_block_matrix(terms))
    return max(float(w[-1]), 0.0)


def gamma_reduced_block(terms_v) -> float:
    """gamma_affine variant built from projected terms B_j V."""
    w = np.linalg.eigvalsh(_gamma_block_matrix(list(terms_v)))
    return max(float(w[-1]), 0.0)


# finite grids underestimate suprema; inflate estimated bounds
GAMMA_SAFETY = 1.1


def gamma_general(fun: ParamMatrixFun, box: Box, grid_per_dim: int = 20,
                  coeff_norms=None) -> float:
    """Grid-estimated curvature bound 2 g1(x)^2 + 6 g0(x) g2(x).

    g0 = sum |f_j| ||A_j||, g1 = sum ||grad f_j|| ||A_j||,
    g2 = sum ||hess f_j|| ||A_j||, maximized over a uniform grid on the
    box and inflated by a safety factor.  Requires Hessians for every
    scalar function.
    """
    for f in fun.funcs:
        if f.hess is None:
            raise ValueError("gamma_general requires Hessians for every scalar function")
    norms = fun.coeff_norms if coeff_norms is None else tuple(coeff_norms)
    axes = [np.linspace(lo, hi, grid_per_dim) if hi > lo else np.array([lo])
            for lo, hi in zip(box.lower, box.upper)]
    best = 0.0
    for point in np.ndindex(*[len(a) for a in axes]):
        x = np.array([axes[i][point[i]] for i in range(box.dim)])
        g0 = g1 = g2 = 0.0
        for f, nrm in zip(fun.funcs, norms):
            g0 += abs(f.value(x)) * nrm
            g1 += np.linalg.norm(np.asarray(f.grad(x), dtype=float)) * nrm
            g2 += np.linalg.norm(np.asarray(f.hess(x), dtype=float), 2) * nrm
        best = max(best, 2.0 * g1 ** 2 + 6.0 * g0 * g2)
    return GAMMA_SAFETY * best
