"""Exact-filter oracle: truth/observation simulation and Kalman-Bucy integration.

The conditional law of the hidden state is Gaussian with mean mu_t and
covariance P_t evolving as

    dmu_t = A mu_t dt + P_t C^T (dY_t - C mu_t dt),
    dP_t/dt = B B^T + A P_t + P_t A^T - P_t C^T C P_t.

P solves a deterministic Riccati ODE and is integrated with a classical
fourth-order Runge-Kutta scheme on a half-step grid (midpoint values are kept
for higher-order flow integration elsewhere). mu is driven by the observation
increments; its dY term uses the left-endpoint (Ito) coefficient while the
deterministic drift gets a trapezoidal corrector.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CovarianceBlowup, DimensionMismatch, NonFinite
from .linmodel import LinearGaussianModel
from .skewalg import sym_part

__all__ = [
    "TimeGrid",
    "ObservationPath",
    "KalmanPath",
    "simulate_truth_and_observations",
    "riccati_rhs",
    "integrate_kalman",
    "kalman_to_csv",
    "make_rng",
]

_BLOWUP_NORM = 1e12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with `steps` integration intervals (steps+1 nodes)."""

    t0: float
    dt: float
    steps: int

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise DimensionMismatch(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise DimensionMismatch(f"steps must be >= 1, got {self.steps}")

    @classmethod
    def from_duration(cls, t0: float, dt: float, T: float) -> "TimeGrid":
        """Grid covering [t0, t0+T] with step dt (T rounded to a whole step)."""
        return cls(t0=t0, dt=dt, steps=max(1, round(T / dt)))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def mid_times(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.steps) + 0.5)


@dataclass(frozen=True)
class ObservationPath:
    """Observation increments dY per interval plus the hidden truth per node."""

    dY: np.ndarray  # (steps, m)
    X: np.ndarray  # (steps+1, n)
    seed: object = None


@dataclass(frozen=True)
class KalmanPath:
    """Kalman-Bucy statistics on the grid nodes.

    P_half holds the covariance at interval midpoints t_k + dt/2, a byproduct
    of the half-step integration used by fourth-order flow integrators.
    """

    t: np.ndarray  # (steps+1,)
    mu: np.ndarray  # (steps+1, n)
    P: np.ndarray  # (steps+1, n, n)
    Pdot: np.ndarray  # (steps+1, n, n)
    P_half: np.ndarray = field(repr=False, default=None)  # (steps, n, n)
    grid: TimeGrid = None


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) from an int seed or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def simulate_truth_and_observations(
    model: LinearGaussianModel, grid: TimeGrid, seed
) -> ObservationPath:
    """Euler-Maruyama simulation of the hidden state and observation increments.

    X_0 ~ N(mu0, P0); X_{k+1} = X_k + A X_k dt + B dW_k with dW_k ~ N(0, dt I);
    dY_k = C X_k dt + dV_k with dV_k ~ N(0, dt I). Truth noise and observation
    noise come from independent child streams of the given seed.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    truth_ss, obs_ss = ss.spawn(2)
    truth_rng = make_rng(truth_ss)
    obs_rng = make_rng(obs_ss)

    dt = grid.dt
    sqdt = np.sqrt(dt)
    n, m, n_prime = model.n, model.m, model.n_prime

    x = np.empty((grid.steps + 1, n))
    chol0 = np.linalg.cholesky(model.P0)
    x[0] = model.mu0 + chol0 @ truth_rng.standard_normal(n)
    dw = sqdt * truth_rng.standard_normal((grid.steps, n_prime))
    dv = sqdt * obs_rng.standard_normal((grid.steps, m))

    dy = np.empty((grid.steps, m))
    for k in range(grid.steps):
        dy[k] = model.C @ x[k] * dt + dv[k]
        x[k + 1] = x[k] + model.A @ x[k] * dt + model.B @ dw[k]
    if not np.all(np.isfinite(x)):
        raise NonFinite("truth simulation produced non-finite states")
    return ObservationPath(dY=dy, X=x, seed=seed)


def riccati_rhs(P: np.ndarray, model: LinearGaussianModel) -> np.ndarray:
    """Riccati right-hand side B B^T + A P + P A^T - P C^T C P, symmetrized."""
    P = np.asarray(P, dtype=float)
    ap = model.A @ P
    pc = P @ model.C.T
    return sym_part(model.B @ model.B.T + ap + ap.T - pc @ pc.T)


def _rk4_riccati(model: LinearGaussianModel, p0: np.ndarray, h: float, nsteps: int) -> np.ndarray:
    """Classical RK4 on the Riccati ODE; returns all nsteps+1 nodes."""
    out = np.empty((nsteps + 1,) + p0.shape)
    out[0] = p0
    p = p0
    for k in range(nsteps):
        k1 = riccati_rhs(p, model)
        k2 = riccati_rhs(p + 0.5 * h * k1, model)
        k3 = riccati_rhs(p + 0.5 * h * k2, model)
        k4 = riccati_rhs(p + h * k3, model)
        p = sym_part(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if np.linalg.norm(p) > _BLOWUP_NORM:
            raise CovarianceBlowup(
                f"covariance norm exceeded {_BLOWUP_NORM:.0e} at fine step {k + 1}"
            )
        out[k + 1] = p
    return out


def integrate_kalman(
    model: LinearGaussianModel, observations: ObservationPath, grid: TimeGrid
) -> KalmanPath:
    """Integrate the Kalman-Bucy mean and covariance along the grid.

    The covariance is advanced by RK4 at half the grid step so both the node
    values and the interval midpoints come from one fourth-order pass. The
    mean uses the shared dY increments with a left-endpoint gain and a
    trapezoidal corrector on the deterministic drift.

    Raises CovarianceBlowup when any ||P||_F exceeds 1e12.
    """
    if observations.dY.shape[0] != grid.steps:
        raise DimensionMismatch(
            f"observation path has {observations.dY.shape[0]} increments, "
            f"grid expects {grid.steps}"
        )
    dt = grid.dt
    fine = _rk4_riccati(model, model.P0, 0.5 * dt, 2 * grid.steps)
    p_nodes = fine[::2]
    p_half = fine[1::2]
    pdot = np.stack([riccati_rhs(p, model) for p in p_nodes])

    n = model.n
    ctc = model.C.T @ model.C
    mu = np.empty((grid.steps + 1, n))
    mu[0] = model.mu0
    for k in range(grid.steps):
        gain = p_nodes[k] @ model.C.T
        drift_k = model.A @ mu[k] - p_nodes[k] @ (ctc @ mu[k])
        obs_term = gain @ observations.dY[k]
        pred = mu[k] + drift_k * dt + obs_term
        drift_next = model.A @ pred - p_nodes[k + 1] @ (ctc @ pred)
        mu[k + 1] = mu[k] + 0.5 * (drift_k + drift_next) * dt + obs_term
    if not np.all(np.isfinite(mu)):
        raise NonFinite("mean integration produced non-finite values")

    return KalmanPath(
        t=grid.times, mu=mu, P=p_nodes, Pdot=pdot, P_half=p_half, grid=grid
    )


def kalman_to_csv(path: KalmanPath, file) -> None:
    """Write the Kalman path as CSV: t, mu_1..mu_n, P_11..P_nn (upper triangle).

    `file` may be an open text file or a filesystem path. Floats are written
    with shortest round-trip repr, so identical paths produce identical bytes.
    """
    n = path.mu.shape[1]
    header = ["t"] + [f"mu_{i + 1}" for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    header += [f"P_{i + 1}{j + 1}" for i, j in pairs]

    def _write(fh):
        # \n terminators keep the bytes identical to the other report CSVs
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(path.t.shape[0]):
            row = [repr(float(path.t[k]))]
            row += [repr(float(v)) for v in path.mu[k]]
            row += [repr(float(path.P[k][i, j])) for i, j in pairs]
            writer.writerow(row)

    if hasattr(file, "write"):
        _write(file)
    else:
        with open(file, "w", newline="") as fh:
            _write(fh)
