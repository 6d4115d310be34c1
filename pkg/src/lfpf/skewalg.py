"""Skew-symmetric matrix algebra.

Provides the basis of Skew(n), the solver for the skew Lyapunov-type equation
X P^{-1} + P^{-1} X = S, and the polar retraction onto the group of matrices
preserving a given SPD form.
"""
from __future__ import annotations

import numpy as np

from .errors import NotSkew, NotSPD, SingularInput

__all__ = [
    "sym_part",
    "skew_part",
    "check_skew",
    "spd_eigh",
    "skew_basis",
    "solve_skew_lyapunov",
    "project_to_gauge_group",
    "random_skew",
]

# Relative tolerance for "is skew" / "is symmetric" checks on float inputs.
SKEW_RTOL = 1e-10


def sym_part(x: np.ndarray) -> np.ndarray:
    """Symmetric part (x + x^T)/2."""
    return 0.5 * (x + x.T)


def skew_part(x: np.ndarray) -> np.ndarray:
    """Skew-symmetric part (x - x^T)/2."""
    return 0.5 * (x - x.T)


def check_skew(x: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate that x is skew-symmetric up to rounding and return it exactly skew.

    Raises NotSkew when the symmetric residual exceeds SKEW_RTOL relative to
    the matrix scale. The returned matrix is antisymmetrized so downstream
    algebra can rely on X^T == -X exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise NotSkew(f"{name} must be square, got shape {x.shape}")
    scale = 1.0 + np.linalg.norm(x)
    if np.linalg.norm(x + x.T) > SKEW_RTOL * scale:
        raise NotSkew(f"{name} is not skew-symmetric")
    return skew_part(x)


def spd_eigh(p: np.ndarray, name: str = "P") -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix; raises NotSPD on failure.

    Returns (eigenvalues, eigenvectors) with p == Q diag(lam) Q^T.
    """
    p = sym_part(np.asarray(p, dtype=float))
    lam, q = np.linalg.eigh(p)
    if lam[0] <= 0.0:
        raise NotSPD(f"{name} has a non-positive eigenvalue ({lam[0]:.3e})")
    return lam, q


def skew_basis(n: int) -> list[np.ndarray]:
    """Basis E^(ij) of Skew(n): +1 at (i, j), -1 at (j, i), for i < j.

    The n(n-1)/2 elements are pairwise orthogonal under <X, Y> = tr(X^T Y).
    """
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            e[j, i] = -1.0
            basis.append(e)
    return basis


def solve_skew_lyapunov(p: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Solve X P^{-1} + P^{-1} X = S for the unique skew-symmetric X.

    P must be SPD and S skew. In the eigenbasis P = Q diag(lam) Q^T the
    equation decouples entrywise: X'_ij = S'_ij * lam_i lam_j / (lam_i + lam_j)
    with S' = Q^T S Q. The coefficients are bounded by max(lam), so the solve
    is well conditioned, and the result is antisymmetrized before returning.
    """
    s = check_skew(s, "S")
    lam, q = spd_eigh(p)
    s_p = q.T @ s @ q
    denom = lam[:, None] + lam[None, :]
    x_p = s_p * (lam[:, None] * lam[None, :]) / denom
    return skew_part(q @ x_p @ q.T)


def project_to_gauge_group(g: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Retract g onto the group {g : g P g^T = P} for SPD P.

    Returns P^{1/2} U P^{-1/2}, where U is the orthogonal polar factor of
    P^{-1/2} g P^{1/2}. Fixed points of the map are exactly the group
    elements, so a g already satisfying the constraint is returned unchanged
    (up to rounding).
    """
    g = np.asarray(g, dtype=float)
    lam, q = spd_eigh(p)
    sq = np.sqrt(lam)
    p_half = (q * sq) @ q.T
    p_half_inv = (q / sq) @ q.T
    try:
        u, sv, vt = np.linalg.svd(p_half_inv @ g @ p_half)
    except np.linalg.LinAlgError as exc:
        raise SingularInput(f"polar factorization failed: {exc}") from exc
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(vt)):
        raise SingularInput("polar factorization produced non-finite factors")
    # The orthogonal polar factor is unique only for invertible input.
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise SingularInput(f"matrix is numerically singular (sigma_min {sv[-1]:.3e})")
    return p_half @ (u @ vt) @ p_half_inv


def random_skew(n: int, scale: float, seed) -> np.ndarray:
    """Random skew matrix with N(0, scale^2) coefficients on skew_basis.

    `seed` may be an int, a numpy SeedSequence, or a Generator; output is
    reproducible for a fixed seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.zeros((n, n))
    for e in skew_basis(n):
        out += float(rng.standard_normal()) * scale * e
    return out
