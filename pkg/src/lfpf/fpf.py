"""The parametrized class of linear feedback particle filters.

A filter is described in centered coordinates E_t = S_t - mu_t by

    dE_t = (G_t dt + sum_i W^(i)_t dY^(i)_t) P_t^{-1} E_t + sum_j h^(j)_t dBbar^(j)_t,

where the W^(i) are skew-symmetric, the h^(j) are independent-noise columns,
and the drift gain G_t is pinned by the covariance-transport constraint

    G_t = 1/2 (Pdot_t + sum_i W^(i) P^{-1} W^(i) - sum_j h^(j) (h^(j))^T) + W^(0)

with W^(0) an arbitrary skew matrix. Any such filter transports the
conditional covariance exactly along P_t; the presets below are the named
members of the class.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import NonFinite, NotSkew
from .kalman import KalmanPath, ObservationPath, TimeGrid, make_rng, riccati_rhs
from .linmodel import LinearGaussianModel
from .skewalg import check_skew, skew_part, solve_skew_lyapunov, sym_part

__all__ = [
    "FilterSpec",
    "Ensemble",
    "sample_ensemble",
    "drift_gain",
    "gain_from_coeffs",
    "preset_slfpf",
    "preset_detfpf",
    "preset_otdetfpf",
    "preset_kim",
    "preset_divfree",
    "particle_step",
    "advance_ensemble",
    "conditional_cov_propagate",
    "linear_flow",
]

# Schedules map (t, mu, P, Pdot) to coefficient arrays.
Schedule = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FilterSpec:
    """One member of the filter class.

    Attributes:
        n: state dimension.
        m: number of observation channels.
        r: number of independent noise channels.
        skews: schedule returning an (m+1, n, n) stack of skew matrices; entry
            0 is the free drift skew W^(0), entry i >= 1 multiplies dY^(i).
        noise_cols: schedule returning an (r, n) array whose rows are the
            independent-noise columns h^(j).
        label: preset name or "custom".
    """

    n: int
    m: int
    r: int
    skews: Schedule
    noise_cols: Schedule
    label: str = "custom"

    def coeffs(self, t: float, mu, P, Pdot) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate and validate both schedules at one grid node."""
        w = np.asarray(self.skews(t, mu, P, Pdot), dtype=float)
        if w.shape != (self.m + 1, self.n, self.n):
            raise NotSkew(
                f"skew schedule returned shape {w.shape}, "
                f"expected {(self.m + 1, self.n, self.n)}"
            )
        if not np.all(np.isfinite(w)):
            raise NonFinite(f"skew schedule returned non-finite values at t={t}")
        scale = 1.0 + np.linalg.norm(w)
        if np.linalg.norm(w + np.transpose(w, (0, 2, 1))) > 1e-10 * scale:
            raise NotSkew(f"skew schedule returned a non-skew matrix at t={t}")
        h = np.asarray(self.noise_cols(t, mu, P, Pdot), dtype=float).reshape(self.r, self.n)
        if not np.all(np.isfinite(h)):
            raise NonFinite(f"noise schedule returned non-finite values at t={t}")
        return w, h


@dataclass(frozen=True)
class Ensemble:
    """Particle states plus the ensemble's noise stream.

    The stream is counter-based (Philox); each step draws one (N, r) block so
    particle i always consumes slice i, independent of any iteration order.
    """

    states: np.ndarray  # (N, n)
    rng: np.random.Generator

    @property
    def N(self) -> int:
        return self.states.shape[0]


def sample_ensemble(model: LinearGaussianModel, N: int, seed) -> Ensemble:
    """Draw N i.i.d. particles from the prior N(mu0, P0).

    The seed is split into one stream for the initial draw and one for all
    subsequent step noise.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, noise_ss = ss.spawn(2)
    chol = np.linalg.cholesky(model.P0)
    xi = make_rng(init_ss).standard_normal((N, model.n))
    return Ensemble(states=model.mu0 + xi @ chol.T, rng=make_rng(noise_ss))


def gain_from_coeffs(w: np.ndarray, h: np.ndarray, P: np.ndarray, Pdot: np.ndarray) -> np.ndarray:
    """Drift gain G from already-evaluated coefficients (see module docstring)."""
    acc = np.asarray(Pdot, dtype=float).copy()
    for i in range(1, w.shape[0]):
        acc += w[i] @ np.linalg.solve(P, w[i])
    if h.shape[0]:
        acc -= h.T @ h
    return 0.5 * acc + w[0]


def drift_gain(spec: FilterSpec, t: float, mu, P, Pdot) -> np.ndarray:
    """Drift gain G_t of the spec at one node."""
    w, h = spec.coeffs(t, mu, P, Pdot)
    return gain_from_coeffs(w, h, np.asarray(P, dtype=float), np.asarray(Pdot, dtype=float))


# ---------------------------------------------------------------------------
# presets


def preset_slfpf(model: LinearGaussianModel) -> FilterSpec:
    """Stochastic linear feedback particle filter (square-root ensemble form).

    r = n' channels with h^(j) the columns of B, no dY-driven skews, and
    W^(0) = (A P - P A^T)/2; equivalently dE = (A - P C^T C / 2) E dt + B dBbar.
    """
    bt = model.B.T.copy()

    def skews(t, mu, P, Pdot):
        out = np.zeros((model.m + 1, model.n, model.n))
        out[0] = skew_part(model.A @ P)
        return out

    def noise_cols(t, mu, P, Pdot):
        return bt

    return FilterSpec(
        n=model.n, m=model.m, r=model.n_prime,
        skews=skews, noise_cols=noise_cols, label="slfpf",
    )


def preset_detfpf(model: LinearGaussianModel) -> FilterSpec:
    """Deterministic filter with the free skew chosen as in the stochastic one."""
    def skews(t, mu, P, Pdot):
        out = np.zeros((model.m + 1, model.n, model.n))
        out[0] = skew_part(model.A @ P)
        return out

    def noise_cols(t, mu, P, Pdot):
        return np.zeros((0, model.n))

    return FilterSpec(
        n=model.n, m=model.m, r=0, skews=skews, noise_cols=noise_cols, label="detfpf"
    )


def optimal_skew_rhs(A: np.ndarray, B: np.ndarray, C: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Right-hand side of the skew Lyapunov equation picking the optimal skew.

    S = A^T - A + (P^{-1}BB^T - BB^T P^{-1} + P C^T C - C^T C P)/2.
    """
    s = (A.T - A)
    s = s + skew_part(np.linalg.solve(P, B @ B.T)) + skew_part(P @ (C.T @ C))
    return skew_part(s)


def preset_otdetfpf(model: LinearGaussianModel) -> FilterSpec:
    """Deterministic filter minimizing the pointwise transport cost.

    W^(0) = (A P - P A^T)/2 + X, where X solves X P^{-1} + P^{-1} X = S with S
    from optimal_skew_rhs. Equivalently
    dE = (A + BB^T P^{-1}/2 - P C^T C / 2 + X P^{-1}) E dt.
    """
    def skews(t, mu, P, Pdot):
        out = np.zeros((model.m + 1, model.n, model.n))
        rhs = optimal_skew_rhs(model.A, model.B, model.C, P)
        out[0] = skew_part(model.A @ P) + solve_skew_lyapunov(P, rhs)
        return out

    def noise_cols(t, mu, P, Pdot):
        return np.zeros((0, model.n))

    return FilterSpec(
        n=model.n, m=model.m, r=0, skews=skews, noise_cols=noise_cols, label="otdetfpf"
    )


def preset_kim(model: LinearGaussianModel, gamma1: float, gamma2: float) -> FilterSpec:
    """Two-parameter noise family: h-columns gamma1*B and gamma2*(P C^T).

    At (1, 0) the dynamics coincide with preset_slfpf; at (0, 0) the filter is
    deterministic (all noise columns vanish).
    """
    g1bt = float(gamma1) * model.B.T

    def skews(t, mu, P, Pdot):
        out = np.zeros((model.m + 1, model.n, model.n))
        out[0] = skew_part(model.A @ P)
        return out

    def noise_cols(t, mu, P, Pdot):
        return np.vstack([g1bt, float(gamma2) * (model.C @ P)])

    return FilterSpec(
        n=model.n, m=model.m, r=model.n_prime + model.m,
        skews=skews, noise_cols=noise_cols, label="kim",
    )


def preset_divfree(model: LinearGaussianModel, Pi_list, Pi_tilde) -> FilterSpec:
    """Divergence-free perturbation of the stochastic filter.

    The observation gain gets a state-linear divergence-free column P Pi^(i)
    per channel and the drift a P Pi_tilde term, which in class coordinates is
    W^(i) = P Pi^(i) P and
    W^(0) = (A P - P A^T)/2 - P Pi_tilde P - (1/2) sum_i (C^(i)mu) P Pi^(i) P.

    Raises NotSkew when any Pi fails skewness.
    """
    pis = [check_skew(pi, f"Pi[{i}]") for i, pi in enumerate(Pi_list)]
    if len(pis) != model.m:
        raise NotSkew(f"expected {model.m} gain perturbations, got {len(pis)}")
    pi_tilde = check_skew(Pi_tilde, "Pi_tilde")
    bt = model.B.T.copy()

    def skews(t, mu, P, Pdot):
        out = np.empty((model.m + 1, model.n, model.n))
        sandwiches = [skew_part(P @ pi @ P) for pi in pis]
        w0 = skew_part(model.A @ P) - skew_part(P @ pi_tilde @ P)
        cmu = model.C @ mu
        for i, sw in enumerate(sandwiches):
            w0 = w0 - 0.5 * float(cmu[i]) * sw
            out[i + 1] = sw
        out[0] = w0
        return out

    def noise_cols(t, mu, P, Pdot):
        return bt

    return FilterSpec(
        n=model.n, m=model.m, r=model.n_prime,
        skews=skews, noise_cols=noise_cols, label="divfree",
    )


# ---------------------------------------------------------------------------
# stepping and exactness oracles


def particle_step(
    spec: FilterSpec,
    ensemble: Ensemble,
    t: float,
    mu: np.ndarray,
    mu_next: np.ndarray,
    P: np.ndarray,
    Pdot: np.ndarray,
    dY: np.ndarray,
    dt: float,
    dW: np.ndarray | None = None,
) -> Ensemble:
    """Advance every particle by one Euler-Maruyama step.

    In centered coordinates E = S - mu_t:
        E <- E + (G dt + sum_i W^(i) dY^(i)) P^{-1} E + sum_j h^(j) dBbar^(j),
    then S = mu_next + E. The exact (oracle) mean is used on both ends.

    dW may supply the (N, r) noise increments explicitly (already scaled by
    sqrt(dt)); by default one block is drawn from the ensemble stream.
    """
    w, h = spec.coeffs(t, mu, P, Pdot)
    g = gain_from_coeffs(w, h, P, Pdot)
    incr = g * dt
    for i in range(1, w.shape[0]):
        incr = incr + w[i] * float(dY[i - 1])
    # L = incr @ P^{-1}; with P symmetric, solve on the transpose side.
    L = np.linalg.solve(P, incr.T).T

    e = ensemble.states - mu
    e_next = e + e @ L.T
    if spec.r:
        if dW is None:
            dW = np.sqrt(dt) * ensemble.rng.standard_normal((ensemble.N, spec.r))
        e_next = e_next + dW @ h
    states = mu_next + e_next
    if not np.all(np.isfinite(states)):
        raise NonFinite(f"particle step produced non-finite states at t={t}")
    return replace(ensemble, states=states)


def advance_ensemble(
    spec: FilterSpec,
    kalman_path: KalmanPath,
    observations: ObservationPath,
    grid: TimeGrid,
    ensemble: Ensemble,
) -> Ensemble:
    """Step an ensemble across the whole grid with oracle gains."""
    ens = ensemble
    for k in range(grid.steps):
        ens = particle_step(
            spec, ens, kalman_path.t[k], kalman_path.mu[k], kalman_path.mu[k + 1],
            kalman_path.P[k], kalman_path.Pdot[k], observations.dY[k], grid.dt,
        )
    return ens


def conditional_cov_propagate(
    spec: FilterSpec,
    kalman_path: KalmanPath,
    observations: ObservationPath,
    grid: TimeGrid,
    method: str = "heun",
    model: LinearGaussianModel | None = None,
) -> np.ndarray:
    """Propagate the ensemble's conditional covariance without particles.

    Given the observation path, the covariance Sigma of the centered particle
    law satisfies

        dSigma = L Sigma + Sigma L^T
                 + sum_i W^(i) P^{-1} Sigma P^{-1} (W^(i))^T dt
                 + sum_j h^(j)(h^(j))^T dt,
        L dt = (G dt + sum_i W^(i) dY^(i)) P^{-1},

    where the quadratic-variation term comes from the dY-driven diffusion
    (d[Y,Y] = I dt). Sigma_0 = P_0 and an exact filter keeps Sigma = P; the
    returned path is the Monte-Carlo-free exactness oracle.

    method="heun" (default) averages the one-step increment between the two
    bracketing grid nodes (predictor-corrector, same dY increment at both
    evaluations); the deterministic part of the recursion is then second
    order, which keeps strongly transient paths inside the 1e-3 default
    tolerance at dt=1e-3. method="euler" is the plain left-endpoint scheme.
    method="rk4" requires a spec with no dY-driven skews (checked) and
    integrates the then deterministic Lyapunov ODE with fourth order, using
    midpoint covariances from the Kalman path; pass `model` so midpoint Pdot
    values are exact.
    """
    steps = grid.steps
    sigma = np.empty_like(kalman_path.P)
    sigma[0] = kalman_path.P[0]

    if method in ("heun", "euler"):

        def increment(k: int, s: np.ndarray, dY: np.ndarray) -> np.ndarray:
            t, mu, P, Pdot = (
                kalman_path.t[k], kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k],
            )
            w, h = spec.coeffs(t, mu, P, Pdot)
            g = gain_from_coeffs(w, h, P, Pdot)
            incr = g * grid.dt
            for i in range(1, w.shape[0]):
                incr = incr + w[i] * float(dY[i - 1])
            L = np.linalg.solve(P, incr.T).T
            ds = L @ s + s @ L.T
            pinv_s = np.linalg.solve(P, s)
            for i in range(1, w.shape[0]):
                ds = ds + (w[i] @ np.linalg.solve(P, pinv_s.T @ w[i].T)) * grid.dt
            if h.shape[0]:
                ds = ds + (h.T @ h) * grid.dt
            return ds

        for k in range(steps):
            s = sigma[k]
            d1 = increment(k, s, observations.dY[k])
            if method == "euler":
                sigma[k + 1] = sym_part(s + d1)
                continue
            star = sym_part(s + d1)
            d2 = increment(k + 1, star, observations.dY[k])
            sigma[k + 1] = sym_part(s + 0.5 * (d1 + d2))
        return sigma

    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")

    def node(k_half: int):
        # integer index -> (t, mu, P, Pdot) with half indices at midpoints
        if k_half % 2 == 0:
            k = k_half // 2
            return kalman_path.t[k], kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k]
        k = k_half // 2
        t = kalman_path.t[k] + 0.5 * grid.dt
        mu = 0.5 * (kalman_path.mu[k] + kalman_path.mu[k + 1])
        P = kalman_path.P_half[k]
        if model is not None:
            pdot = riccati_rhs(P, model)
        else:
            pdot = (kalman_path.P[k + 1] - kalman_path.P[k]) / grid.dt
        return t, mu, P, pdot

    def rhs(k_half: int, s: np.ndarray) -> np.ndarray:
        t, mu, P, Pdot = node(k_half)
        w, h = spec.coeffs(t, mu, P, Pdot)
        if np.any(w[1:]):
            raise ValueError("rk4 covariance propagation needs a spec without dY-driven skews")
        f = np.linalg.solve(P, gain_from_coeffs(w, h, P, Pdot).T).T
        out = f @ s + s @ f.T
        if h.shape[0]:
            out = out + h.T @ h
        return out

    dt = grid.dt
    for k in range(steps):
        s = sigma[k]
        k1 = rhs(2 * k, s)
        k2 = rhs(2 * k + 1, s + 0.5 * dt * k1)
        k3 = rhs(2 * k + 1, s + 0.5 * dt * k2)
        k4 = rhs(2 * k + 2, s + dt * k3)
        sigma[k + 1] = sym_part(s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    return sigma


def linear_flow(
    spec: FilterSpec,
    kalman_path: KalmanPath,
    observations: ObservationPath,
    grid: TimeGrid,
) -> np.ndarray:
    """Fundamental matrices Phi_k of the centered linear flow of a spec.

    dPhi = (G dt + sum_i W^(i) dY^(i)) P^{-1} Phi, Phi_0 = I. The dt part is
    advanced with RK4 (midpoint covariances from the Kalman path); dY-driven
    terms, when present, are added at Euler order.
    """
    n = spec.n
    steps = grid.steps
    phi = np.empty((steps + 1, n, n))
    phi[0] = np.eye(n)

    def f_at(t, mu, P, Pdot):
        w, h = spec.coeffs(t, mu, P, Pdot)
        return np.linalg.solve(P, gain_from_coeffs(w, h, P, Pdot).T).T

    dt = grid.dt
    for k in range(steps):
        t_k = kalman_path.t[k]
        mu_mid = 0.5 * (kalman_path.mu[k] + kalman_path.mu[k + 1])
        pdot_mid = (kalman_path.P[k + 1] - kalman_path.P[k]) / dt
        f0 = f_at(t_k, kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k])
        fm = f_at(t_k + 0.5 * dt, mu_mid, kalman_path.P_half[k], pdot_mid)
        f1 = f_at(
            kalman_path.t[k + 1], kalman_path.mu[k + 1],
            kalman_path.P[k + 1], kalman_path.Pdot[k + 1],
        )
        p = phi[k]
        k1 = f0 @ p
        k2 = fm @ (p + 0.5 * dt * k1)
        k3 = fm @ (p + 0.5 * dt * k2)
        k4 = f1 @ (p + dt * k3)
        nxt = p + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

        w, _ = spec.coeffs(t_k, kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k])
        if np.any(w[1:]):
            incr = np.zeros((n, n))
            for i in range(1, w.shape[0]):
                incr = incr + w[i] * float(observations.dY[k, i - 1])
            nxt = nxt + np.linalg.solve(kalman_path.P[k], incr.T).T @ p
        phi[k + 1] = nxt
    return phi
