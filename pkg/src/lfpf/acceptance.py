"""The acceptance suite: frozen benchmarks and one check per criterion.

Each criterion function returns a CriterionResult whose items carry
(value, tolerance, pass) triples; run_all executes the whole suite. The CLI
`check` subcommand and tests/test_acceptance.py both call into this module so
the command line and the test run agree by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cost import (
    Infeasible,
    MinimizerData,
    cost_L,
    cost_gradient,
    global_minimizer,
    minimize_constrained,
    scalar_feasibility,
)
from .fpf import (
    Ensemble,
    FilterSpec,
    advance_ensemble,
    conditional_cov_propagate,
    gain_from_coeffs,
    linear_flow,
    particle_step,
    preset_detfpf,
    preset_divfree,
    preset_kim,
    preset_otdetfpf,
    preset_slfpf,
    sample_ensemble,
)
from .gauge import GaugeMotion, GaugeSpec, integrate_gauge, pushforward_spec, transitivity_witness
from .harness import config_from_dict, ensemble_stats, run_experiment
from .kalman import ObservationPath, TimeGrid, integrate_kalman, make_rng, simulate_truth_and_observations
from .linmodel import LinearGaussianModel, validate_model
from .skewalg import random_skew, skew_basis, solve_skew_lyapunov

__all__ = ["CheckItem", "CriterionResult", "run_all", "CRITERIA"]


@dataclass(frozen=True)
class CheckItem:
    name: str
    value: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    items: tuple[CheckItem, ...]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} criterion {self.number:2d} ({self.name}): "
            + "; ".join(f"{it.name}={it.value:.3e} vs {it.tolerance:.3e}" for it in self.items)
        )


def _le(name: str, value: float, tol: float) -> CheckItem:
    ok = bool(np.isfinite(value)) and value <= tol
    return CheckItem(name=name, value=float(value), tolerance=float(tol), passed=ok)


def _ge(name: str, value: float, tol: float) -> CheckItem:
    ok = bool(np.isfinite(value)) and value >= tol
    return CheckItem(name=f"{name}_ge", value=float(value), tolerance=float(tol), passed=ok)


# ---------------------------------------------------------------------------
# frozen benchmarks


@lru_cache(maxsize=None)
def scalar_model() -> LinearGaussianModel:
    return validate_model([[-1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])


@lru_cache(maxsize=None)
def model_3d() -> LinearGaussianModel:
    rng = np.random.default_rng(11)
    A = rng.normal(size=(3, 3)) * 0.4 - 0.8 * np.eye(3)
    B = rng.normal(size=(3, 2)) * 0.6
    C = rng.normal(size=(2, 3)) * 0.6
    P0 = 0.5 * np.eye(3) + 0.1 * np.ones((3, 3))
    return validate_model(A, B, C, np.zeros(3), P0)


@lru_cache(maxsize=None)
def model_2d() -> LinearGaussianModel:
    rng = np.random.default_rng(4)
    A = rng.normal(size=(2, 2)) * 0.4 - 0.7 * np.eye(2)
    B = rng.normal(size=(2, 2)) * 0.5
    C = rng.normal(size=(1, 2)) * 0.7
    P0 = 0.4 * np.eye(2) + 0.05
    return validate_model(A, B, C, np.zeros(2), P0)


@lru_cache(maxsize=None)
def _path(which: str, dt: float, T: float, seed: int):
    model = {"1d": scalar_model, "2d": model_2d, "3d": model_3d}[which]()
    grid = TimeGrid.from_duration(0.0, dt, T)
    obs = simulate_truth_and_observations(model, grid, seed)
    return model, grid, obs, integrate_kalman(model, obs, grid)


def _transport_err(spec: FilterSpec, which: str, dt: float, T: float = 2.0, seed: int = 5) -> float:
    model, grid, obs, kp = _path(which, dt, T, seed)
    sigma = conditional_cov_propagate(spec, kp, obs, grid)
    return float(
        np.max(np.linalg.norm(sigma - kp.P, axis=(1, 2)) / np.linalg.norm(kp.P, axis=(1, 2)))
    )


def _preset_zoo(model: LinearGaussianModel) -> list[FilterSpec]:
    specs = [preset_slfpf(model), preset_detfpf(model), preset_otdetfpf(model)]
    for g1, g2 in ((1.0, 0.0), (0.0, 1.0), (0.5, 0.5), (1.0, 1.0)):
        specs.append(preset_kim(model, g1, g2))
    pis = [random_skew(model.n, 0.05, 100 + i) for i in range(model.m)]
    specs.append(preset_divfree(model, pis, random_skew(model.n, 0.05, 100 + model.m)))
    return specs


def _drift_gauge(n: int, m: int, scale: float, seed: int) -> GaugeSpec:
    u = np.zeros((m + 1, n, n))
    u[0] = random_skew(n, scale, seed)

    def upsilons(t, mu, P, Pdot):
        return u

    return GaugeSpec(n=n, m=m, upsilons=upsilons, g0=np.eye(n), label="drift")


def _full_gauge(n: int, m: int, scale0: float, scale_obs: float, seed: int) -> GaugeSpec:
    u = np.zeros((m + 1, n, n))
    u[0] = random_skew(n, scale0, seed)
    for i in range(m):
        u[i + 1] = random_skew(n, scale_obs, seed + 1 + i)

    def upsilons(t, mu, P, Pdot):
        return u

    return GaugeSpec(n=n, m=m, upsilons=upsilons, g0=np.eye(n), label="full")


# ---------------------------------------------------------------------------
# criteria


def criterion_1() -> CriterionResult:
    """Riccati steady state on the scalar benchmark."""
    _, _, _, kp = _path("1d", 1e-3, 10.0, 7)
    err = abs(float(kp.P[-1, 0, 0]) - (np.sqrt(2.0) - 1.0))
    return CriterionResult(1, "riccati steady state", (_le("abs_err_at_T", err, 1e-6),))


def criterion_2() -> CriterionResult:
    """Skew Lyapunov solver residuals plus the uniqueness negative control."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    control = np.inf
    for trial in range(200):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n))
        P = a @ a.T + 0.05 * n * np.eye(n)
        s = random_skew(n, 1.0, rng)
        x = solve_skew_lyapunov(P, s)
        res = np.linalg.norm(x @ np.linalg.solve(P, np.eye(n)) + np.linalg.solve(P, x) - s)
        worst = max(worst, res / (1.0 + np.linalg.norm(s)))
        if n >= 2:
            k = random_skew(n, 1e-3, rng)
            pinv = np.linalg.inv(P)
            pert = np.linalg.norm((x + k) @ pinv + pinv @ (x + k) - s)
            control = min(control, pert / np.linalg.norm(k))
    return CriterionResult(
        2, "skew lyapunov solver",
        (_le("max_scaled_residual", worst, 1e-10), _ge("uniqueness_perturbation", control, 1e-6)),
    )


def criterion_3() -> CriterionResult:
    """Covariance-transport exactness of every preset, with dt halving."""
    model = model_3d()
    worst = {dt: 0.0 for dt in (1e-3, 5e-4)}
    for dt in worst:
        for spec in _preset_zoo(model):
            worst[dt] = max(worst[dt], _transport_err(spec, "3d", dt))
    ratio = worst[1e-3] / worst[5e-4]
    return CriterionResult(
        3, "preset exactness",
        (_le("worst_max_rel_err", worst[1e-3], 1e-3), _ge("halving_ratio", ratio, 1.7)),
    )


def criterion_4() -> CriterionResult:
    """Monte Carlo covariance error at N = 1e4 and the 1/sqrt(N) slope."""
    scalar_cfg = {
        "model": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "mu0": [0.0], "P0": [[1.0]]},
        "grid": {"dt": 1e-3, "T": 2.0},
        "filter": {"preset": "slfpf"},
        "ensemble": {"N": 10000, "seed": 42},
    }
    rep_1d = run_experiment(config_from_dict(scalar_cfg))
    m3 = model_3d()
    cfg_3d = {
        "model": {
            "A": m3.A.tolist(), "B": m3.B.tolist(), "C": m3.C.tolist(),
            "mu0": m3.mu0.tolist(), "P0": m3.P0.tolist(),
        },
        "grid": {"dt": 1e-3, "T": 2.0},
        "filter": {"preset": "slfpf"},
        "ensemble": {"N": 10000, "seed": 43},
    }
    rep_3d = run_experiment(config_from_dict(cfg_3d))

    sizes = (100, 1000, 10000)

    def rms_ladder(which: str) -> np.ndarray:
        model, grid, obs, kp = _path(which, 1e-3, 2.0, 5)
        spec = preset_slfpf(model)
        out = []
        for N in sizes:
            errs = []
            for seed in range(10):
                ens = advance_ensemble(spec, kp, obs, grid, sample_ensemble(model, N, 1000 + seed))
                _, _, _, cov_rel = ensemble_stats(ens, kp.mu[-1], kp.P[-1])
                errs.append(cov_rel)
            out.append(math.sqrt(np.mean(np.square(errs))))
        return np.log10(out)

    # A single 10-replicate ladder leaves the fitted slope with a spread of
    # about 0.09, wider than the 0.1 budget allows; pooling the scalar and
    # 3-d benchmarks halves it.
    pooled = 0.5 * (rms_ladder("1d") + rms_ladder("3d"))
    slope = np.polyfit(np.log10(sizes), pooled, 1)[0]
    return CriterionResult(
        4, "monte carlo exactness",
        (
            _le("scalar_cov_rel_err_at_T", rep_1d.cov_rel_err[-1], 0.1),
            _le("threed_cov_rel_err_at_T", rep_3d.cov_rel_err[-1], 0.1),
            _le("slope_dist_to_neg_half", abs(slope + 0.5), 0.1),
        ),
    )


def criterion_5() -> CriterionResult:
    """Projected gauge residual bound; unprojected residual linear in dt."""
    model = model_3d()
    full = _full_gauge(3, 2, 0.3, 0.2, 50)
    _, grid, obs, kp = _path("3d", 1e-3, 2.0, 5)
    projected = integrate_gauge(full, kp, obs, grid, project=True).residual.max()

    drift = _drift_gauge(3, 2, 0.15, 60)
    res = {}
    for dt in (1e-3, 5e-4, 2.5e-4):
        _, g, o, k = _path("3d", dt, 2.0, 5)
        res[dt] = integrate_gauge(drift, k, o, g, project=False).residual.max()
    r1, r2 = res[1e-3] / res[5e-4], res[5e-4] / res[2.5e-4]
    return CriterionResult(
        5, "gauge constraint",
        (
            _le("projected_max_residual", projected, 1e-6),
            _le("unprojected_ratio_dev_1", abs(r1 - 2.0), 0.35),
            _le("unprojected_ratio_dev_2", abs(r2 - 2.0), 0.35),
        ),
    )


def _coarsen(obs: ObservationPath, refine: int, steps: int, m: int) -> ObservationPath:
    dY = obs.dY.reshape(steps, refine, m).sum(axis=1)
    return ObservationPath(dY=dY, X=obs.X[::refine], seed=obs.seed)


def _two_route_deviation(
    model: LinearGaussianModel,
    base: FilterSpec,
    gspec: GaugeSpec,
    dt: float,
    obs_fine: ObservationPath,
    dW_fine: np.ndarray,
    refine: int,
    T: float,
) -> float:
    grid = TimeGrid.from_duration(0.0, dt, T)
    obs = _coarsen(obs_fine, refine, grid.steps, model.m) if refine > 1 else obs_fine
    kp = integrate_kalman(model, obs, grid)
    gp = integrate_gauge(gspec, kp, obs, grid, project=True)
    push = pushforward_spec(base, GaugeMotion(gspec, gp))
    N = dW_fine.shape[1]
    ens0 = sample_ensemble(model, N, 99)
    ea = ens0
    eb = Ensemble(states=ens0.states.copy(), rng=ens0.rng)
    dev = 0.0
    for k in range(grid.steps):
        if base.r:
            if refine > 1:
                dW = dW_fine[k * refine:(k + 1) * refine].sum(axis=0)
            else:
                dW = dW_fine[k]
        else:
            dW = None
        args = (kp.t[k], kp.mu[k], kp.mu[k + 1], kp.P[k], kp.Pdot[k], obs.dY[k], dt)
        ea = particle_step(base, ea, *args, dW=dW)
        eb = particle_step(push, eb, *args, dW=dW)
        mapped = kp.mu[k + 1] + (ea.states - kp.mu[k + 1]) @ gp.g[k + 1].T
        dev = max(dev, float(np.max(np.linalg.norm(mapped - eb.states, axis=1))))
    return dev


def criterion_6() -> CriterionResult:
    """Matched-noise two-route pushforward comparison at strong order one."""
    model = model_2d()
    T, N = 2.0, 64
    fine = TimeGrid.from_duration(0.0, 5e-4, T)
    obs_fine = simulate_truth_and_observations(model, fine, 12)
    base = preset_slfpf(model)
    dW_fine = np.sqrt(fine.dt) * make_rng(1234).standard_normal((fine.steps, N, base.r))
    gspec = _drift_gauge(2, 1, 0.25, 70)
    dev_c = _two_route_deviation(model, base, gspec, 1e-3, obs_fine, dW_fine, 2, T)
    dev_f = _two_route_deviation(model, base, gspec, 5e-4, obs_fine, dW_fine, 1, T)

    # the pushforward spec must itself transport the conditional covariance
    full = _full_gauge(2, 1, 0.2, 0.15, 80)
    err = {}
    for dt in (1e-3, 5e-4):
        _, grid, obs, kp = _path("2d", dt, T, 12)
        gp = integrate_gauge(full, kp, obs, grid, project=True)
        push = pushforward_spec(base, GaugeMotion(full, gp))
        err[dt] = _transport_err(push, "2d", dt, T, 12)
    return CriterionResult(
        6, "pushforward two-route",
        (
            _le("max_particle_deviation", dev_c, 1e-2),
            _le("halving_ratio_dev", abs(dev_c / dev_f - 2.0), 0.5),
            _le("push_transport_rel_err", err[1e-3], 1e-3),
            _ge("push_transport_halving", err[1e-3] / err[5e-4], 1.7),
        ),
    )


def criterion_7() -> CriterionResult:
    """Closed-form optimal skew: preset equality, local minimality, stationarity."""
    model = model_3d()
    _, grid, obs, kp = _path("3d", 1e-3, 2.0, 5)
    spec = preset_otdetfpf(model)
    nodes = list(range(0, grid.steps + 1, 200))
    eq_err = 0.0
    stat = 0.0
    for k in nodes:
        t, mu, P, Pdot = kp.t[k], kp.mu[k], kp.P[k], kp.Pdot[k]
        w, h = spec.coeffs(t, mu, P, Pdot)
        w_star = minimize_constrained(P, (model.A, model.B, model.C))
        eq_err = max(eq_err, float(np.max(np.abs(w_star - w[0]))))
        G = gain_from_coeffs(w, h, P, Pdot)
        stat = max(stat, float(np.linalg.norm(np.linalg.solve(P, G.T) - G @ np.linalg.inv(P))))

    k = grid.steps // 2
    P, Pdot = kp.P[k], kp.Pdot[k]
    w_star = minimize_constrained(P, (model.A, model.B, model.C))
    zeros = [np.zeros((3, 3))] * model.m
    best = cost_L(([w_star] + zeros, []), P, Pdot).value
    violations = 0
    rng = np.random.default_rng(77)
    for _ in range(100):
        k_dir = random_skew(3, 1.0, rng)
        for eps in (1e-2, 1e-1):
            val = cost_L(([w_star + eps * k_dir] + zeros, []), P, Pdot).value
            if val < best:
                violations += 1
    return CriterionResult(
        7, "optimal skew closed form",
        (
            _le("preset_equality", eq_err, 1e-12),
            _le("local_minimality_violations", violations, 0),
            _le("stationarity_residual", stat, 1e-10),
        ),
    )


def criterion_8() -> CriterionResult:
    """Zero-cost data: cost, gradient, and the matrix identity, plus FD check."""
    rng = np.random.default_rng(88)
    m = 2
    worst_cost = 0.0
    worst_grad = 0.0
    worst_iii = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 6))
        a = rng.normal(size=(n, n))
        P = a @ a.T + 0.1 * n * np.eye(n)
        r0 = int(rng.integers(0, n + 1))
        w = rng.normal(size=(n, r0))
        Pdot = w @ w.T
        data = global_minimizer(P, Pdot, r_max=n, m=m)
        assert isinstance(data, MinimizerData)
        spec_data = (data.omegas, data.noise_cols)
        worst_cost = max(worst_cost, cost_L(spec_data, P, Pdot).value)
        hht = data.noise_cols.T @ data.noise_cols if data.rank else np.zeros((n, n))
        worst_iii = max(worst_iii, float(np.linalg.norm(hht - Pdot)))
        r = data.noise_cols.shape[0]
        for slot in range(m + 1):
            for k_dir in skew_basis(n):
                ks = np.zeros((m + 1, n, n))
                ks[slot] = k_dir
                g = cost_gradient(spec_data, P, Pdot, (ks, np.zeros((r, n))))
                worst_grad = max(worst_grad, abs(g))
        for j in range(r):
            for i in range(n):
                ell = np.zeros((r, n))
                ell[j, i] = 1.0
                g = cost_gradient(spec_data, P, Pdot, (np.zeros((m + 1, n, n)), ell))
                worst_grad = max(worst_grad, abs(g))

    fd_err = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        a = rng.normal(size=(n, n))
        P = a @ a.T + 0.1 * n * np.eye(n)
        Pdot = rng.normal(size=(n, n))
        Pdot = Pdot + Pdot.T
        r = int(rng.integers(1, 3))
        w = np.stack([random_skew(n, 1.0, rng) for _ in range(m + 1)])
        h = rng.normal(size=(r, n))
        ks = np.stack([random_skew(n, 1.0, rng) for _ in range(m + 1)])
        ell = rng.normal(size=(r, n))
        analytic = cost_gradient((w, h), P, Pdot, (ks, ell))
        eps = 1e-6
        up = cost_L((w + eps * ks, h + eps * ell), P, Pdot).value
        dn = cost_L((w - eps * ks, h - eps * ell), P, Pdot).value
        fd = (up - dn) / (2 * eps)
        fd_err = max(fd_err, abs(fd - analytic) / max(1.0, abs(analytic)))
    return CriterionResult(
        8, "global minimizer bundle",
        (
            _le("max_cost_at_minimizer", worst_cost, 1e-12),
            _le("max_gradient_at_minimizer", worst_grad, 1e-10),
            _le("condition_iii_residual", worst_iii, 1e-10),
            _le("fd_gradient_rel_err", fd_err, 1e-6),
        ),
    )


def criterion_9() -> CriterionResult:
    """Scalar interval test agrees with the semidefinite test on a grid."""
    a_grid = np.linspace(-2.0, 2.0, 20)
    p_grid = np.linspace(0.05, 3.0, 20)
    P0 = float(p_grid.min())
    disagreements = 0
    margin = np.inf
    for a in a_grid:
        for pt in p_grid:
            interval = scalar_feasibility(float(a), 1.0, 1.0, P0, float(pt))
            pdot = 1.0 + 2.0 * a * pt - pt * pt
            margin = min(margin, abs(pdot))
            data = global_minimizer(np.array([[pt]]), np.array([[pdot]]), r_max=1, m=1)
            if interval != isinstance(data, MinimizerData):
                disagreements += 1
    return CriterionResult(
        9, "scalar feasibility agreement",
        (
            _le("grid_disagreements", disagreements, 0),
            _ge("boundary_margin", margin, 1e-8),
        ),
    )


def criterion_10() -> CriterionResult:
    """Transitivity witness: gauge residual and pathwise particle mapping."""
    model = model_3d()
    _, grid, obs, kp = _path("3d", 1e-3, 2.0, 5)
    spec_a = preset_detfpf(model)
    spec_b = preset_otdetfpf(model)
    witness = transitivity_witness(spec_a, spec_b, kp, obs)
    phi_a = linear_flow(spec_a, kp, obs, grid)
    phi_b = linear_flow(spec_b, kp, obs, grid)
    e0 = sample_ensemble(model, 100, 3).states - model.mu0
    mapping = 0.0
    for k in range(0, grid.steps + 1, 50):
        ea = e0 @ phi_a[k].T
        eb = e0 @ phi_b[k].T
        mapped = ea @ witness.g[k].T
        mapping = max(mapping, float(np.max(np.linalg.norm(mapped - eb, axis=1))))
    return CriterionResult(
        10, "transitivity witness",
        (
            _le("max_gauge_residual", float(witness.residual.max()), 1e-6),
            _le("max_mapping_deviation", mapping, 1e-6),
        ),
    )


CRITERIA = (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
)


def run_all() -> list[CriterionResult]:
    """Run all ten criteria in order."""
    return [fn() for fn in CRITERIA]
