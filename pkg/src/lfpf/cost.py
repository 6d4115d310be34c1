"""The pointwise transport cost of a filter and its minimizers.

The cost of coefficient data (W^(0)..W^(m), h^(1)..h^(r)) at a covariance
state (P, Pdot) is L = tr(G P^{-1} G^T) with G the induced drift gain; it
measures how far the filter's transport drift is from zero. Minimizing over
the free skew alone has a closed form (minimize_constrained); minimizing over
all data reaches L = 0 exactly when Pdot is positive semidefinite
(global_minimizer), which in the scalar case is the interval test of
scalar_feasibility.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateC, NotPositiveDefinite, RankExceedsChannels
from .fpf import gain_from_coeffs, optimal_skew_rhs
from .skewalg import check_skew, skew_part, solve_skew_lyapunov, sym_part

__all__ = [
    "CostEvaluation",
    "MinimizerData",
    "Infeasible",
    "cost_L",
    "minimize_constrained",
    "global_minimizer",
    "scalar_feasibility",
    "scalar_rate_feasibility",
    "cost_gradient",
]

# Eigenvalues of Pdot inside (-FEAS_TOL, FEAS_TOL) count as zero: Riccati
# trajectories graze Pdot = 0 at steady state.
FEAS_TOL = 1e-10


@dataclass(frozen=True)
class CostEvaluation:
    """Transport cost value together with the drift gain it was built from."""

    value: float
    G: np.ndarray


@dataclass(frozen=True)
class MinimizerData:
    """Zero-cost coefficient data: all skews zero, noise columns factor Pdot."""

    omegas: np.ndarray  # (m+1, n, n), all zero
    noise_cols: np.ndarray  # (r, n)
    rank: int
    feasible: bool = True


@dataclass(frozen=True)
class Infeasible:
    """Witness that Pdot has a negative eigenvalue, so no zero-cost data exists."""

    min_eigenvalue: float
    feasible: bool = False


def _normalize_data(spec_data) -> tuple[np.ndarray, np.ndarray]:
    """Coerce (skews, noise columns) into validated stacked arrays."""
    omegas_in, noise_in = spec_data
    omegas = np.array([check_skew(w, f"W[{i}]") for i, w in enumerate(omegas_in)])
    n = omegas.shape[-1]
    noise = np.asarray(noise_in, dtype=float)
    h = noise.reshape(-1, n) if noise.size else np.zeros((0, n))
    return omegas, h


def cost_L(spec_data, P, Pdot) -> CostEvaluation:
    """Transport cost tr(G P^{-1} G^T) of coefficient data at (P, Pdot).

    spec_data is a pair (skew stack or list W^(0)..W^(m), noise rows
    h^(1)..h^(r)); raises NotSkew on a non-skew W. The value is assembled as a
    squared Frobenius norm, so it is nonnegative by construction.
    """
    w, h = _normalize_data(spec_data)
    P = np.asarray(P, dtype=float)
    g = gain_from_coeffs(w, h, P, np.asarray(Pdot, dtype=float))
    chol = np.linalg.cholesky(P)
    x = scipy.linalg.solve_triangular(chol, g.T, lower=True)
    return CostEvaluation(value=float(np.sum(x * x)), G=g)


def minimize_constrained(P, Pdot_parts) -> np.ndarray:
    """Closed-form minimizer of the cost over the free skew alone (r = 0).

    Pdot_parts is the model triple (A, B, C) whose Riccati equation produced
    Pdot. The unique minimizing skew is

        W* = (A P - P A^T)/2 + X,  X P^{-1} + P^{-1} X = optimal_skew_rhs,

    which is exactly the free skew used by preset_otdetfpf. At the minimum the
    stationarity identity P^{-1} G^T - G P^{-1} = 0 holds.
    """
    A, B, C = (np.asarray(x, dtype=float) for x in Pdot_parts)
    P = np.asarray(P, dtype=float)
    return skew_part(A @ P) + solve_skew_lyapunov(P, optimal_skew_rhs(A, B, C, P))


def global_minimizer(P, Pdot, r_max: int, m: int) -> MinimizerData | Infeasible:
    """Zero-cost coefficient data when it exists.

    Both sum(h h^T) and -sum(W P^{-1} W) are positive semidefinite, so the
    zero-cost condition sum(h h^T) - sum(W P^{-1} W) = Pdot is satisfiable
    exactly when Pdot >= 0; this returns the skew-free choice with noise rows
    sqrt(lambda_j) v_j from the eigendecomposition of Pdot (r = rank Pdot).

    Returns Infeasible when Pdot has an eigenvalue below -FEAS_TOL; raises
    RankExceedsChannels when rank(Pdot) > r_max.
    """
    P = np.asarray(P, dtype=float)
    Pdot = np.asarray(Pdot, dtype=float)
    if np.linalg.norm(Pdot - Pdot.T) > 1e-10 * (1.0 + np.linalg.norm(Pdot)):
        raise NotPositiveDefinite("Pdot must be symmetric")
    n = P.shape[0]
    lam, q = np.linalg.eigh(sym_part(Pdot))
    if lam[0] < -FEAS_TOL:
        return Infeasible(min_eigenvalue=float(lam[0]))
    keep = lam > FEAS_TOL
    rank = int(np.count_nonzero(keep))
    if rank > r_max:
        raise RankExceedsChannels(
            f"Pdot has rank {rank} but only {r_max} noise channels are allowed"
        )
    noise = (np.sqrt(lam[keep])[:, None] * q.T[keep]) if rank else np.zeros((0, n))
    return MinimizerData(omegas=np.zeros((m + 1, n, n)), noise_cols=noise, rank=rank)


def scalar_feasibility(a: float, b: float, c: float, P0: float, Pt: float) -> bool:
    """Interval test for scalar zero-cost data: P0 <= Pt <= (a + sqrt(a^2 + b^2 c^2))/c^2.

    Raises DegenerateC when c = 0 (the bound's denominator vanishes); use
    scalar_rate_feasibility in that case.
    """
    if c == 0:
        raise DegenerateC("upper bound undefined for c = 0; test the rate directly")
    upper = (a + np.sqrt(a * a + b * b * c * c)) / (c * c)
    return bool(P0 <= Pt <= upper)


def scalar_rate_feasibility(a: float, b: float, c: float, Pt: float) -> bool:
    """Direct scalar test: Pdot(Pt) = b^2 + 2 a Pt - c^2 Pt^2 >= 0 (within FEAS_TOL)."""
    return bool(b * b + 2.0 * a * Pt - c * c * Pt * Pt >= -FEAS_TOL)


def cost_gradient(spec_data, P, Pdot, direction) -> float:
    """Analytic directional derivative of the cost at spec_data.

    direction is a pair (skew stack K^(0)..K^(m), rows l^(1)..l^(r)); the
    derivative is 2 tr(dG P^{-1} G^T) with

        dG = K^(0) + 1/2 sum_i (K^(i) P^{-1} W^(i) + W^(i) P^{-1} K^(i))
             - 1/2 sum_j (l^(j) (h^(j))^T + h^(j) (l^(j))^T).
    """
    w, h = _normalize_data(spec_data)
    k, el = _normalize_data(direction)
    if k.shape != w.shape or el.shape != h.shape:
        raise ValueError("direction shapes must match the coefficient data")
    P = np.asarray(P, dtype=float)
    g = gain_from_coeffs(w, h, P, np.asarray(Pdot, dtype=float))
    dg = k[0].copy()
    for i in range(1, w.shape[0]):
        dg = dg + 0.5 * (k[i] @ np.linalg.solve(P, w[i]) + w[i] @ np.linalg.solve(P, k[i]))
    if h.shape[0]:
        dg = dg - 0.5 * (el.T @ h + h.T @ el)
    return float(2.0 * np.trace(dg @ np.linalg.solve(P, g.T)))
