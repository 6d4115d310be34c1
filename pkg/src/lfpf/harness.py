"""Experiment orchestration: configs, ensemble statistics, runs, and reports.

A config (TOML, or JSON with the same structure) selects a model, a grid, a
filter preset, an optional gauge, and run parameters. run_experiment wires the
full pipeline: simulate truth and observations, integrate the Kalman oracle,
step the ensemble, propagate the conditional covariance, and trace the
transport cost. Everything is reproducible from the config seed.
"""
from __future__ import annotations

import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cost import cost_L
from .errors import ConfigError, FilterError, InsufficientParticles
from .fpf import (
    Ensemble,
    FilterSpec,
    conditional_cov_propagate,
    particle_step,
    preset_detfpf,
    preset_divfree,
    preset_kim,
    preset_otdetfpf,
    preset_slfpf,
    sample_ensemble,
)
from .gauge import GaugeMotion, GaugePath, GaugeSpec, integrate_gauge, pushforward_spec
from .kalman import (
    KalmanPath,
    ObservationPath,
    TimeGrid,
    integrate_kalman,
    kalman_to_csv,
    riccati_rhs,
    simulate_truth_and_observations,
)
from .linmodel import LinearGaussianModel, validate_model
from .skewalg import check_skew, random_skew

__all__ = [
    "DEFAULT_TOLERANCES",
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "config_from_dict",
    "build_filter",
    "ensemble_stats",
    "run_experiment",
    "write_report",
]

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "cov_rel_err": 0.1,
    "transport_rel_err": 1e-3,
    "gauge_residual": 1e-6,
    "pushforward_deviation": 1e-2,
}

PRESET_NAMES = ("slfpf", "detfpf", "otdetfpf", "kim", "divfree")


@dataclass(frozen=True)
class ExperimentConfig:
    model: LinearGaussianModel
    grid: TimeGrid
    filter_name: str
    filter_params: dict
    N: int
    seed: int
    gauge: GaugeSpec | None = None
    out_dir: str | None = None
    oracle_gain: bool = True
    project: bool = True
    tolerances: dict = field(default_factory=dict)
    label: str = "experiment"
    echo: dict = field(default_factory=dict)

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


@dataclass
class ExperimentReport:
    label: str
    grid: TimeGrid
    t: np.ndarray
    emp_mean: np.ndarray  # (steps+1, n)
    emp_cov: np.ndarray  # (steps+1, n, n)
    mean_err: np.ndarray
    cov_rel_err: np.ndarray
    transport_rel_err: np.ndarray
    cost_trace: np.ndarray
    kalman: KalmanPath
    checks: dict[str, dict]
    config_echo: dict
    wall_clock_seconds: float
    gauge_residual: np.ndarray | None = None
    pushforward_deviation: float | None = None
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(item["pass"] for item in self.checks.values()) and not self.errors


# ---------------------------------------------------------------------------
# config handling


def load_config(path: str) -> dict:
    """Parse a TOML (default) or JSON config file into a raw dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if path.endswith(".json"):
        try:
            return json.loads(blob)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return tomllib.loads(blob.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


def _matrix(section: dict, key: str, context: str) -> np.ndarray:
    if key not in section:
        raise ConfigError(f"[{context}] missing required key {key!r}")
    try:
        return np.asarray(section[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{context}] key {key!r} is not numeric: {exc}") from exc


def config_from_dict(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a parsed config dict.

    overrides maps CLI flag names (seed, particles, dt, out, project) onto
    values that take precedence over the file.
    """
    overrides = dict(overrides or {})
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    if "model" not in raw:
        raise ConfigError("missing [model] section")
    msec = raw["model"]
    try:
        model = validate_model(
            _matrix(msec, "A", "model"), _matrix(msec, "B", "model"),
            _matrix(msec, "C", "model"), _matrix(msec, "mu0", "model"),
            _matrix(msec, "P0", "model"),
        )
    except FilterError as exc:
        raise ConfigError(f"[model] {exc}") from exc

    if "grid" not in raw:
        raise ConfigError("missing [grid] section")
    gsec = raw["grid"]
    dt = float(overrides.get("dt") or gsec.get("dt", 0.0))
    if dt <= 0:
        raise ConfigError("[grid] dt must be positive")
    try:
        grid = TimeGrid.from_duration(float(gsec.get("t0", 0.0)), dt, float(gsec["T"]))
    except KeyError as exc:
        raise ConfigError("[grid] missing required key 'T'") from exc

    fsec = raw.get("filter", {})
    name = fsec.get("preset")
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"[filter] preset must be one of {PRESET_NAMES}, got {name!r}"
        )
    params = {k: v for k, v in fsec.items() if k != "preset"}

    esec = raw.get("ensemble", {})
    N = int(overrides.get("particles") or esec.get("N", 1000))
    if N < 1:
        raise ConfigError("[ensemble] N must be at least 1")
    seed = overrides.get("seed")
    seed = int(esec.get("seed", 0)) if seed is None else int(seed)

    gauge_spec = None
    if "gauge" in raw and raw["gauge"].get("enabled", True):
        gauge_spec = _build_gauge(model, raw["gauge"])

    modes = raw.get("modes", {})
    project = bool(modes.get("project", True))
    if overrides.get("no_project"):
        project = False
    oracle_gain = bool(modes.get("oracle_gain", True))

    tolerances = dict(raw.get("tolerances", {}))
    for key in tolerances:
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"[tolerances] unknown key {key!r}")

    out_dir = overrides.get("out") or raw.get("output", {}).get("dir")

    echo = {"file": raw, "overrides": {k: v for k, v in overrides.items() if v is not None}}
    return ExperimentConfig(
        model=model, grid=grid, filter_name=name, filter_params=params,
        N=N, seed=seed, gauge=gauge_spec, out_dir=out_dir,
        oracle_gain=oracle_gain, project=project, tolerances=tolerances,
        label=str(raw.get("label", "experiment")), echo=echo,
    )


def _build_gauge(model: LinearGaussianModel, gsec: dict) -> GaugeSpec:
    n, m = model.n, model.m
    u = np.zeros((m + 1, n, n))
    if "upsilon0" in gsec:
        u[0] = check_skew(_matrix(gsec, "upsilon0", "gauge"), "upsilon0")
    if "upsilon" in gsec:
        mats = gsec["upsilon"]
        if len(mats) != m:
            raise ConfigError(f"[gauge] upsilon must list {m} matrices, got {len(mats)}")
        for i, mat in enumerate(mats):
            u[i + 1] = check_skew(np.asarray(mat, dtype=float), f"upsilon[{i}]")
    stack = u.copy()

    def upsilons(t, mu, P, Pdot):
        return stack

    g0 = gsec.get("g0", "identity")
    g0 = np.eye(n) if isinstance(g0, str) and g0 == "identity" else np.asarray(g0, dtype=float)
    if g0.shape != (n, n):
        raise ConfigError(f"[gauge] g0 must be {n}x{n}")
    return GaugeSpec(n=n, m=m, upsilons=upsilons, g0=g0, label="config")


def build_filter(model: LinearGaussianModel, name: str, params: dict) -> FilterSpec:
    """Instantiate a named preset with its config parameters."""
    if name == "slfpf":
        return preset_slfpf(model)
    if name == "detfpf":
        return preset_detfpf(model)
    if name == "otdetfpf":
        return preset_otdetfpf(model)
    if name == "kim":
        return preset_kim(model, float(params.get("gamma1", 1.0)), float(params.get("gamma2", 0.0)))
    if name == "divfree":
        if "Pi" in params:
            pis = [np.asarray(p, dtype=float) for p in params["Pi"]]
            pit = np.asarray(params.get("Pi_tilde", np.zeros((model.n, model.n))), dtype=float)
        else:
            scale = float(params.get("pi_scale", 0.05))
            base = int(params.get("pi_seed", 0))
            pis = [random_skew(model.n, scale, base + i) for i in range(model.m)]
            pit = random_skew(model.n, scale, base + model.m)
        return preset_divfree(model, pis, pit)
    raise ConfigError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# statistics


def ensemble_stats(ensemble, mu_ref, P_ref):
    """Sample mean and unbiased covariance with reference errors.

    Sums are accumulated with math.fsum, so the outputs are bit-identical
    under any permutation of the particles. Raises InsufficientParticles for
    fewer than two particles.
    """
    states = np.asarray(getattr(ensemble, "states", ensemble), dtype=float)
    N, n = states.shape
    if N < 2:
        raise InsufficientParticles(f"need at least 2 particles, got {N}")
    mean = np.array([math.fsum(states[:, i]) / N for i in range(n)])
    dev = states - mean
    cov = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            cov[i, j] = cov[j, i] = math.fsum(dev[:, i] * dev[:, j]) / (N - 1)
    mu_ref = np.asarray(mu_ref, dtype=float)
    P_ref = np.asarray(P_ref, dtype=float)
    mean_err = float(np.linalg.norm(mean - mu_ref))
    cov_rel_err = float(np.linalg.norm(cov - P_ref) / np.linalg.norm(P_ref))
    return mean, cov, mean_err, cov_rel_err


def _node_stats(states: np.ndarray, mu_ref, P_ref):
    """Vectorized per-node statistics (fixed summation order, not fsum)."""
    N = states.shape[0]
    mean = states.mean(axis=0)
    dev = states - mean
    cov = dev.T @ dev / (N - 1) if N > 1 else np.zeros((states.shape[1],) * 2)
    mean_err = float(np.linalg.norm(mean - mu_ref))
    cov_rel_err = float(np.linalg.norm(cov - P_ref) / np.linalg.norm(P_ref))
    return mean, cov, mean_err, cov_rel_err


# ---------------------------------------------------------------------------
# the pipeline


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the full pipeline for one config; reproducible from config.seed.

    With a gauge configured, the ensemble follows the pushforward spec and the
    report additionally carries the gauge residuals and the matched-noise
    deviation between the two simulation routes (step-then-map versus the
    pushforward spec directly). Numerical failures are re-raised with the
    failing grid node attached.
    """
    t_start = time.perf_counter()
    model, grid = config.model, config.grid
    ss = np.random.SeedSequence(config.seed)
    obs_ss, ens_ss = ss.spawn(2)
    observations = simulate_truth_and_observations(model, grid, obs_ss)
    kalman_path = integrate_kalman(model, observations, grid)
    base_spec = build_filter(model, config.filter_name, config.filter_params)

    gauge_path: GaugePath | None = None
    if config.gauge is not None:
        gauge_path = integrate_gauge(
            config.gauge, kalman_path, observations, grid, project=config.project
        )
        spec = pushforward_spec(base_spec, GaugeMotion(config.gauge, gauge_path))
    else:
        spec = base_spec

    ens = sample_ensemble(model, config.N, ens_ss)
    track_deviation = gauge_path is not None and config.oracle_gain
    base_ens = Ensemble(states=ens.states.copy(), rng=ens.rng) if track_deviation else None

    steps, n = grid.steps, model.n
    emp_mean = np.empty((steps + 1, n))
    emp_cov = np.empty((steps + 1, n, n))
    mean_err = np.empty(steps + 1)
    cov_rel_err = np.empty(steps + 1)
    deviation = 0.0

    def record(k: int, states: np.ndarray) -> None:
        emp_mean[k], emp_cov[k], mean_err[k], cov_rel_err[k] = _node_stats(
            states, kalman_path.mu[k], kalman_path.P[k]
        )

    record(0, ens.states)
    for k in range(steps):
        try:
            if config.oracle_gain:
                mu_k, mu_next = kalman_path.mu[k], kalman_path.mu[k + 1]
                P_k, Pdot_k = kalman_path.P[k], kalman_path.Pdot[k]
            else:
                mu_k, P_k = emp_mean[k], emp_cov[k]
                Pdot_k = riccati_rhs(P_k, model)
                drift = model.A @ mu_k - P_k @ (model.C.T @ (model.C @ mu_k))
                mu_next = mu_k + drift * grid.dt + P_k @ (model.C.T @ observations.dY[k])
            dW = None
            if spec.r:
                dW = np.sqrt(grid.dt) * ens.rng.standard_normal((ens.N, spec.r))
            ens = particle_step(
                spec, ens, kalman_path.t[k], mu_k, mu_next, P_k, Pdot_k,
                observations.dY[k], grid.dt, dW=dW,
            )
            if track_deviation:
                base_ens = particle_step(
                    base_spec, base_ens, kalman_path.t[k], mu_k, mu_next, P_k, Pdot_k,
                    observations.dY[k], grid.dt, dW=dW,
                )
                mapped = mu_next + (base_ens.states - mu_next) @ gauge_path.g[k + 1].T
                deviation = max(
                    deviation, float(np.max(np.linalg.norm(mapped - ens.states, axis=1)))
                )
        except FilterError as exc:
            raise type(exc)(f"at grid node {k} (t={kalman_path.t[k]:.6g}): {exc}") from exc
        record(k + 1, ens.states)

    sigma = conditional_cov_propagate(spec, kalman_path, observations, grid)
    transport_rel_err = np.linalg.norm(sigma - kalman_path.P, axis=(1, 2)) / np.linalg.norm(
        kalman_path.P, axis=(1, 2)
    )

    cost_trace = np.empty(steps + 1)
    for k in range(steps + 1):
        coeffs = spec.coeffs(kalman_path.t[k], kalman_path.mu[k], kalman_path.P[k], kalman_path.Pdot[k])
        cost_trace[k] = cost_L(coeffs, kalman_path.P[k], kalman_path.Pdot[k]).value

    checks: dict[str, dict] = {}

    def add_check(name: str, value: float, tol: float) -> None:
        checks[name] = {"value": float(value), "tolerance": float(tol), "pass": bool(value <= tol)}

    add_check("cov_rel_err_at_T", cov_rel_err[-1], config.tolerance("cov_rel_err"))
    add_check("transport_max_rel_err", transport_rel_err.max(), config.tolerance("transport_rel_err"))
    if gauge_path is not None and config.project:
        add_check("gauge_max_residual", gauge_path.residual.max(), config.tolerance("gauge_residual"))
    if track_deviation:
        add_check("pushforward_max_deviation", deviation, config.tolerance("pushforward_deviation"))

    return ExperimentReport(
        label=config.label,
        grid=grid,
        t=kalman_path.t,
        emp_mean=emp_mean,
        emp_cov=emp_cov,
        mean_err=mean_err,
        cov_rel_err=cov_rel_err,
        transport_rel_err=transport_rel_err,
        cost_trace=cost_trace,
        kalman=kalman_path,
        checks=checks,
        config_echo=config.echo,
        wall_clock_seconds=time.perf_counter() - t_start,
        gauge_residual=None if gauge_path is None else gauge_path.residual,
        pushforward_deviation=deviation if track_deviation else None,
    )


# ---------------------------------------------------------------------------
# file output


def _write_csv(path: str, header: list[str], columns: list[np.ndarray]) -> None:
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(rows):
            fh.write(",".join(repr(float(col[k])) for col in columns) + "\n")


def write_report(report: ExperimentReport, out_dir: str) -> list[str]:
    """Write the JSON summary and per-node CSV series; overwrites in place.

    CSV bodies are byte-identical across re-runs of the same config; the JSON
    summary differs only in its wall-clock field.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    summary = {
        "schema_version": SCHEMA_VERSION,
        "label": report.label,
        "config_echo": report.config_echo,
        "errors": list(report.errors),
        "checks": report.checks,
        "wall_clock_seconds": report.wall_clock_seconds,
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    n = report.emp_mean.shape[1]
    header = ["t"]
    cols: list[np.ndarray] = [report.t]
    for i in range(n):
        header.append(f"mean_{i}")
        cols.append(report.emp_mean[:, i])
    for i in range(n):
        for j in range(i, n):
            header.append(f"cov_{i}{j}")
            cols.append(report.emp_cov[:, i, j])
    header += ["mean_err", "cov_rel_err"]
    cols += [report.mean_err, report.cov_rel_err]
    path = os.path.join(out_dir, "ensemble.csv")
    _write_csv(path, header, cols)
    written.append(path)

    path = os.path.join(out_dir, "kalman.csv")
    kalman_to_csv(report.kalman, path)
    written.append(path)

    path = os.path.join(out_dir, "transport.csv")
    _write_csv(path, ["t", "rel_err"], [report.t, report.transport_rel_err])
    written.append(path)

    path = os.path.join(out_dir, "cost.csv")
    _write_csv(path, ["t", "L"], [report.t, report.cost_trace])
    written.append(path)

    if report.gauge_residual is not None:
        path = os.path.join(out_dir, "gauge.csv")
        _write_csv(path, ["t", "residual"], [report.t, report.gauge_residual])
        written.append(path)

    return written
