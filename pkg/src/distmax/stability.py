"""Single-matrix stability computations.

Spectral abscissa, smallest singular triplets, and the distance to
instability of one matrix by the Hamiltonian level-set iteration with
Boyd-Balakrishnan midpoint refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SingularTriplet",
    "DistResult",
    "spectral_abscissa",
    "smallest_singular_triplet",
    "sigma_min",
    "distance_to_instability",
]

MAX_LEVEL_ITER = 60


class EigensolverError(RuntimeError):
    """Dense eigenvalue computation failed to converge."""


@dataclass(frozen=True)
class SingularTriplet:
    """Consistent smallest singular triplet: M v = sigma u, u^H M = sigma v^H."""

    sigma: float
    u: np.ndarray
    v: np.ndarray

    def residuals(self, m: np.ndarray) -> tuple:
        r1 = np.linalg.norm(m @ self.v - self.sigma * self.u)
        r2 = np.linalg.norm(self.u.conj() @ m - self.sigma * self.v.conj())
        return float(r1), float(r2)


@dataclass(frozen=True)
class DistResult:
    """Distance to instability of one matrix.

    For a stable matrix, ``dist`` = min_omega sigma_min(M - i omega I)
    attained at ``z_star`` = i omega_star with the singular triplet of
    M - z_star I.  For an unstable matrix, ``dist`` = 0 and ``z_star`` is
    a rightmost eigenvalue with unit eigenvector ``eigvec``.
    """

    stable: bool
    dist: float
    z_star: complex
    triplet: SingularTriplet = None
    eigvec: np.ndarray = None

    @property
    def omega_star(self) -> float:
        return float(self.z_star.imag)


def _fix_phase(u: np.ndarray, v: np.ndarray):
    # rotate the pair so the largest-magnitude entry of v is real positive;
    # a common phase keeps the pair consistent
    k = int(np.argmax(np.abs(v)))
    a = v[k]
    if a != 0:
        phase = a / abs(a)
        v = v / phase
        u = u / phase
    return u, v


def spectral_abscissa(m: np.ndarray):
    """Rightmost eigenvalue data of a square matrix.

    Returns (alpha, lambda_r, w): the spectral abscissa, a rightmost
    eigenvalue (ties broken by largest |Im|, then nonnegative Im) and its
    unit right eigenvector.
    """
    m = np.asarray(m, dtype=complex)
    try:
        vals, vecs = sla.eig(m)
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigendecomposition failed: {exc}") from exc
    re = vals.real
    alpha = float(re.max())
    scale = max(1.0, abs(vals).max())
    cand = np.flatnonzero(re >= alpha - 1e-14 * scale)
    # deterministic rightmost representative
    cand = sorted(cand, key=lambda i: (-vals[i].real, -abs(vals[i].imag), -vals[i].imag))
    idx = cand[0]
    w = vecs[:, idx]
    w = w / np.linalg.norm(w)
    return alpha, complex(vals[idx]), w


def smallest_singular_triplet(m: np.ndarray) -> SingularTriplet:
    """Smallest singular value of a p x q (p >= q) matrix with its vectors."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] < m.shape[1] or m.shape[1] < 1:
        raise ValueError("expected a p x q matrix with p >= q >= 1")
    uu, ss, vh = np.linalg.svd(m)
    u = uu[:, m.shape[1] - 1]
    v = vh[m.shape[1] - 1, :].conj()
    u, v = _fix_phase(u, v)
    return SingularTriplet(sigma=float(ss[-1]), u=u, v=v)


def sigma_min(m: np.ndarray) -> float:
    return float(np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)[-1])


def _sigma_min_shifted_batch(m: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """sigma_min(M - i*omega*I) for a batch of frequencies."""
    n = m.shape[0]
    stack = np.broadcast_to(m, (omegas.size, n, n)).astype(complex).copy()
    idx = np.arange(n)
    stack[:, idx, idx] -= 1j * omegas[:, None]
    return np.linalg.svd(stack, compute_uv=False)[:, -1]


def _imaginary_crossings(m: np.ndarray, sigma: float, norm_m: float) -> np.ndarray:
    """Frequencies where sigma is a singular value of M - i omega I.

    Purely imaginary eigenvalues of the Hamiltonian-like matrix
    [[M, -sigma I], [sigma I, -M^H]]; the detection threshold scales with
    ||M||_2 + sigma (cheap overestimate of the block-matrix norm).
    """
    n = m.shape[0]
    h = np.zeros((2 * n, 2 * n), dtype=complex)
    h[:n, :n] = m
    h[:n, n:] = -sigma * np.eye(n)
    h[n:, :n] = sigma * np.eye(n)
    h[n:, n:] = -m.conj().T
    try:
        vals = sla.eigvals(h)
    except sla.LinAlgError as exc:  # pragma: no cover
        raise EigensolverError(f"Hamiltonian eigenvalue extraction failed: {exc}") from exc
    tol_im = 1e-8 * (norm_m + sigma)
    om = np.sort(vals.imag[np.abs(vals.real) <= tol_im])
    if om.size == 0:
        return om
    # collapse numerically coincident crossings
    keep = [om[0]]
    for w in om[1:]:
        if w - keep[-1] > 1e-12 * (1.0 + abs(w)):
            keep.append(w)
    return np.array(keep)


def distance_to_instability(m: np.ndarray, tol: float = 1e-8) -> DistResult:
    """Distance to instability of a square matrix.

    Unstable matrices (spectral abscissa >= 0) get distance 0 with the
    rightmost eigenpair.  Otherwise the level of g(omega) =
    sigma_min(M - i omega I) is lowered by evaluating g at midpoints of
    consecutive level crossings until successive levels differ by at most
    tol * (1 + level).  Real matrices are folded to omega >= 0, which is
    exact by the conjugation symmetry of their singular value function.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = np.asarray(m, dtype=complex)
    real_input = bool(np.allclose(m.imag, 0.0))
    alpha, lam_r, w = spectral_abscissa(m)
    if alpha >= 0.0:
        return DistResult(stable=False, dist=0.0, z_star=lam_r, eigvec=w)

    norm_m = float(np.linalg.norm(m, 2))
    omega0 = abs(lam_r.imag) if real_input else lam_r.imag
    best_omega = float(omega0)
    level = float(sigma_min(m - 1j * omega0 * np.eye(m.shape[0])))

    def record(omegas, gvals):
        nonlocal best_omega
        gmin = float(gvals.min())
        if gmin < level:
            near = np.flatnonzero(gvals <= gmin + 1e-15 * (1.0 + gmin))
            # among global minimizers prefer the smallest |omega|, nonnegative on ties
            k = min(near, key=lambda i: (abs(omegas[i]), 0.0 if omegas[i] >= 0 else 1.0))
            best_omega = float(omegas[k])
        return gmin

    for _ in range(MAX_LEVEL_ITER):
        crossings = _imaginary_crossings(m, level, norm_m)
        if real_input:
            crossings = np.abs(crossings)
        # the incumbent satisfies g(omega) = level exactly, so it is a
        # crossing; tangential double eigenvalues of H split off-axis and
        # would otherwise be missed, stalling the iteration
        crossings = np.sort(np.append(crossings, best_omega))
        keep = [crossings[0]]
        for w in crossings[1:]:
            if w - keep[-1] > 1e-12 * (1.0 + abs(w)):
                keep.append(w)
        crossings = np.array(keep)
        probes = [crossings[0]] if crossings.size == 1 else list(0.5 * (crossings[:-1] + crossings[1:]))
        if real_input:
            probes.append(0.0)
        probes = np.array(sorted(set(float(p) for p in probes)))
        gvals = _sigma_min_shifted_batch(m, probes)
        new_level = min(level, record(probes, gvals))
        if level - new_level <= tol * (1.0 + new_level):
            level = new_level
            break
        level = new_level
    else:
        raise EigensolverError("level-set iteration did not converge")

    omega_star = best_omega
    if real_input and omega_star < 0.0:
        omega_star = -omega_star
    trip = smallest_singular_triplet(m - 1j * omega_star * np.eye(m.shape[0]))
    return DistResult(stable=True, dist=float(trip.sigma), z_star=1j * omega_star, triplet=trip)
