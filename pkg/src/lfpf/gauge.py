"""Gauge transformations of the filter class.

The gauge group at time t collects the invertible g with g P_t g^T = P_t.
Centered particles may be remapped E -> g_t E without changing their
conditional law; g_t itself evolves by

    dg_t = (M_t dt + sum_i U^(i)_t dY^(i)_t) P_t^{-1} g_t,

where the U^(i) are skew and the drift M_t is pinned by the constraint

    M_t = 1/2 (Pdot - g Pdot g^T - sum_i U^(i) P^{-1} (U^(i))^T) + U^(0).

This module integrates gauge paths, pushes filter specs forward along them,
and constructs the witness gauge mapping one deterministic filter onto
another.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFinite, NotSkew, SingularG
from .fpf import FilterSpec, Schedule, linear_flow
from .kalman import KalmanPath, ObservationPath, TimeGrid
from .skewalg import project_to_gauge_group, skew_part

__all__ = [
    "GaugeSpec",
    "GaugePath",
    "GaugeMotion",
    "identity_gauge",
    "gauge_drift",
    "gauge_step",
    "integrate_gauge",
    "gauge_residuals",
    "pushforward_spec",
    "transitivity_witness",
]


@dataclass(frozen=True)
class GaugeSpec:
    """Skew schedules U^(0)..U^(m) plus the initial matrix g0.

    The schedule has the same call shape as FilterSpec.skews: it maps
    (t, mu, P, Pdot) to an (m+1, n, n) stack, entry 0 being the free drift
    skew and entry i >= 1 the multiplier of dY^(i).
    """

    n: int
    m: int
    upsilons: Schedule
    g0: np.ndarray
    label: str = "custom"

    def coeffs(self, t: float, mu, P, Pdot) -> np.ndarray:
        u = np.asarray(self.upsilons(t, mu, P, Pdot), dtype=float)
        if u.shape != (self.m + 1, self.n, self.n):
            raise NotSkew(
                f"gauge schedule returned shape {u.shape}, "
                f"expected {(self.m + 1, self.n, self.n)}"
            )
        if not np.all(np.isfinite(u)):
            raise NonFinite(f"gauge schedule returned non-finite values at t={t}")
        scale = 1.0 + np.linalg.norm(u)
        if np.linalg.norm(u + np.transpose(u, (0, 2, 1))) > 1e-10 * scale:
            raise NotSkew(f"gauge schedule returned a non-skew matrix at t={t}")
        return u


@dataclass(frozen=True)
class GaugePath:
    """A gauge matrix per grid node, with its constraint residuals.

    residual[k] = ||g_k P_k g_k^T - P_k||_F / ||P_k||_F against the covariance
    path the gauge was integrated along.
    """

    t: np.ndarray  # (steps+1,)
    g: np.ndarray  # (steps+1, n, n)
    residual: np.ndarray  # (steps+1,)

    def index_of(self, t: float) -> int:
        """Grid-node index of time t; raises ConfigError off the grid."""
        dt = self.t[1] - self.t[0] if self.t.size > 1 else 1.0
        k = int(np.clip(np.rint((t - self.t[0]) / dt), 0, self.t.size - 1))
        if abs(self.t[k] - t) > 1e-6 * max(dt, 1e-12):
            raise ConfigError(f"time {t} is not a node of the gauge path grid")
        return k


@dataclass(frozen=True)
class GaugeMotion:
    """A GaugeSpec together with its integrated path, as pushforward input."""

    spec: GaugeSpec
    path: GaugePath


def identity_gauge(n: int, m: int) -> GaugeSpec:
    """The trivial gauge: g0 = I and all skews zero (g stays at I)."""
    def upsilons(t, mu, P, Pdot):
        return np.zeros((m + 1, n, n))

    return GaugeSpec(n=n, m=m, upsilons=upsilons, g0=np.eye(n), label="identity")


def gauge_drift(upsilons: np.ndarray, g: np.ndarray, P: np.ndarray, Pdot: np.ndarray) -> np.ndarray:
    """Constraint-compatible drift M for given skews and current g.

    With U skew, -U P^{-1} U^T = U P^{-1} U, so the quadratic-variation
    correction enters with a plus sign below.
    """
    u = np.asarray(upsilons, dtype=float)
    acc = np.asarray(Pdot, dtype=float) - g @ Pdot @ g.T
    for i in range(1, u.shape[0]):
        acc = acc + u[i] @ np.linalg.solve(P, u[i])
    return 0.5 * acc + u[0]


def gauge_step(
    g: np.ndarray,
    upsilons: np.ndarray,
    M: np.ndarray,
    P: np.ndarray,
    dY: np.ndarray,
    dt: float,
    project: bool = True,
    P_next: np.ndarray | None = None,
) -> np.ndarray:
    """One Euler-Maruyama step of the gauge SDE.

    When projecting, the result is mapped onto the gauge group of the node it
    lands on, so P_next should be the covariance at t + dt (defaults to P).

    Raises SingularG if the stepped matrix has |det| < 1e-12.
    """
    u = np.asarray(upsilons, dtype=float)
    incr = M * dt
    for i in range(1, u.shape[0]):
        incr = incr + u[i] * float(dY[i - 1])
    g_next = g + np.linalg.solve(P, incr.T).T @ g
    if abs(np.linalg.det(g_next)) < 1e-12:
        raise SingularG("gauge matrix lost invertibility")
    if project:
        g_next = project_to_gauge_group(g_next, P if P_next is None else P_next)
    return g_next


def gauge_residuals(g: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Relative constraint residuals of gauge matrices along a covariance path."""
    g = np.asarray(g, dtype=float)
    P = np.asarray(P, dtype=float)
    num = np.linalg.norm(g @ P @ np.transpose(g, (0, 2, 1)) - P, axis=(1, 2))
    den = np.linalg.norm(P, axis=(1, 2))
    return num / den


def integrate_gauge(
    gauge_spec: GaugeSpec,
    kalman_path: KalmanPath,
    observations: ObservationPath,
    grid: TimeGrid,
    project: bool = True,
) -> GaugePath:
    """Integrate the gauge SDE along a Kalman path.

    Raises ConfigError when g0 violates the initial constraint beyond 1e-10
    relative.
    """
    g0 = np.asarray(gauge_spec.g0, dtype=float)
    P0 = kalman_path.P[0]
    if np.linalg.norm(g0 @ P0 @ g0.T - P0) > 1e-10 * np.linalg.norm(P0):
        raise ConfigError("gauge g0 does not preserve the initial covariance")

    steps = grid.steps
    g = np.empty((steps + 1,) + g0.shape)
    g[0] = g0
    for k in range(steps):
        t, mu, P, Pdot = (
            kalman_path.t[k], kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k],
        )
        u = gauge_spec.coeffs(t, mu, P, Pdot)
        M = gauge_drift(u, g[k], P, Pdot)
        g[k + 1] = gauge_step(
            g[k], u, M, P, observations.dY[k], grid.dt,
            project=project, P_next=kalman_path.P[k + 1],
        )
    return GaugePath(t=kalman_path.t, g=g, residual=gauge_residuals(g, kalman_path.P))


def pushforward_spec(spec: FilterSpec, gauge: GaugeMotion) -> FilterSpec:
    """Transform a filter spec by a gauge motion.

    The returned spec has, at each node with g = g_t and U^(i) = U^(i)_t,

        W~^(i) = g W^(i) g^T + U^(i)            (i = 1..m)
        h~^(j) = g h^(j)
        W~^(0) = g W^(0) g^T + U^(0)
                 + 1/2 sum_i (U^(i) P^{-1} W~^(i) - W~^(i) P^{-1} U^(i)),

    and represents the gauge-mapped ensemble E~ = g E as a member of the same
    class. Schedules of the result only evaluate at nodes of the gauge path's
    grid (enforced through GaugePath.index_of).
    """
    if spec.n != gauge.spec.n or spec.m != gauge.spec.m:
        raise ConfigError("filter spec and gauge disagree on dimensions")
    path = gauge.path
    gspec = gauge.spec

    def skews(t, mu, P, Pdot):
        g = path.g[path.index_of(t)]
        w = np.asarray(spec.skews(t, mu, P, Pdot), dtype=float)
        u = gspec.coeffs(t, mu, P, Pdot)
        out = np.empty_like(w)
        for i in range(1, w.shape[0]):
            out[i] = skew_part(g @ w[i] @ g.T) + u[i]
        w0 = skew_part(g @ w[0] @ g.T) + u[0]
        for i in range(1, w.shape[0]):
            # (U P^{-1} W~)^T = W~ P^{-1} U for skew U, W~.
            cross = u[i] @ np.linalg.solve(P, out[i])
            w0 = w0 + 0.5 * (cross - cross.T)
        out[0] = skew_part(w0)
        return out

    def noise_cols(t, mu, P, Pdot):
        g = path.g[path.index_of(t)]
        h = np.asarray(spec.noise_cols(t, mu, P, Pdot), dtype=float).reshape(spec.r, spec.n)
        return h @ g.T

    return FilterSpec(
        n=spec.n, m=spec.m, r=spec.r,
        skews=skews, noise_cols=noise_cols,
        label=f"{spec.label}@{gspec.label}",
    )


def transitivity_witness(
    specA: FilterSpec,
    specB: FilterSpec,
    kalman_path: KalmanPath,
    observations: ObservationPath,
) -> GaugePath:
    """Gauge path mapping the flow of one deterministic filter onto another's.

    Computes the fundamental matrices Phi^A, Phi^B of the two centered linear
    flows and returns g_t = Phi^B_t (Phi^A_t)^{-1}, which preserves the
    covariance constraint and maps A-particles to B-particles pathwise.

    Raises ValueError unless both specs are deterministic (r = 0) and
    SingularG if Phi^A loses invertibility.
    """
    if specA.r != 0 or specB.r != 0:
        raise ValueError("transitivity witness requires deterministic specs (r = 0)")
    grid = kalman_path.grid
    phi_a = linear_flow(specA, kalman_path, observations, grid)
    phi_b = linear_flow(specB, kalman_path, observations, grid)
    g = np.empty_like(phi_a)
    for k in range(phi_a.shape[0]):
        if abs(np.linalg.det(phi_a[k])) < 1e-12:
            raise SingularG(f"flow of spec A is singular at node {k}")
        # g = Phi^B (Phi^A)^{-1}, via a solve on the transposed system.
        g[k] = np.linalg.solve(phi_a[k].T, phi_b[k].T).T
    return GaugePath(t=kalman_path.t, g=g, residual=gauge_residuals(g, kalman_path.P))
