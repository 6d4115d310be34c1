"""Definition and validation of the linear-Gaussian filtering problem.

The hidden state and observations follow

    dX_t = A X_t dt + B dW_t,      X_0 ~ N(mu0, P0),
    dY_t = C X_t dt + dV_t,

with W and V independent standard Brownian motions of dimensions n' and m.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFinite, NotPositiveDefinite

__all__ = ["LinearGaussianModel", "validate_model"]

# P0 inputs whose relative asymmetry is below this are symmetrized silently;
# anything larger is treated as a real error, not transcription noise.
_ASYM_RTOL = 1e-10


@dataclass(frozen=True)
class LinearGaussianModel:
    """Validated model data. Immutable; safe to share.

    Attributes:
        A: n x n drift matrix.
        B: n x n_prime diffusion matrix.
        C: m x n observation matrix.
        mu0: length-n prior mean.
        P0: n x n symmetric positive definite prior covariance.
        n, n_prime, m: dimensions.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    mu0: np.ndarray
    P0: np.ndarray
    n: int
    n_prime: int
    m: int


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def validate_model(A, B, C, mu0, P0) -> LinearGaussianModel:
    """Validate raw matrices and return an immutable model.

    P0 is symmetrized when its relative asymmetry is below 1e-10 and rejected
    otherwise; positive definiteness is confirmed by a Cholesky factorization
    with pivots required to exceed 1e-12 times the largest diagonal entry.

    Raises:
        DimensionMismatch: shapes are mutually inconsistent.
        NotPositiveDefinite: P0 is asymmetric or fails the factorization.
        NonFinite: any input entry is NaN or Inf.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    C = _as_matrix(C, "C")
    P0 = _as_matrix(P0, "P0")
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    if mu0.ndim != 1:
        raise DimensionMismatch(f"mu0 must be a vector, got ndim={mu0.ndim}")
    if not np.all(np.isfinite(mu0)):
        raise NonFinite("mu0 contains NaN or Inf")

    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    if mu0.shape != (n,):
        raise DimensionMismatch(f"mu0 has length {mu0.shape[0]}, expected {n}")
    if P0.shape != (n, n):
        raise DimensionMismatch(f"P0 has shape {P0.shape}, expected {(n, n)}")

    p_norm = np.linalg.norm(P0)
    asym = np.linalg.norm(P0 - P0.T)
    if p_norm > 0.0 and asym > _ASYM_RTOL * p_norm:
        raise NotPositiveDefinite(
            f"P0 is asymmetric beyond tolerance (rel. asymmetry {asym / p_norm:.3e})"
        )
    P0 = 0.5 * (P0 + P0.T)

    try:
        chol = np.linalg.cholesky(P0)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"P0 is not positive definite: {exc}") from exc
    pivots = np.diag(chol) ** 2
    if np.min(pivots) < 1e-12 * np.max(np.diag(P0)):
        raise NotPositiveDefinite(
            f"P0 is numerically singular (smallest pivot {np.min(pivots):.3e})"
        )

    model = LinearGaussianModel(
        A=A, B=B, C=C, mu0=mu0, P0=P0, n=n, n_prime=B.shape[1], m=C.shape[0]
    )
    for field in (model.A, model.B, model.C, model.mu0, model.P0):
        field.setflags(write=False)
    return model
