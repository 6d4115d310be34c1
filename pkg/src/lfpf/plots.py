"""Figures rendered from an experiment report.

All figures are written to files; the Agg backend is forced so the module
works in headless environments.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .harness import ExperimentReport  # noqa: E402

# Floor applied before log-scale plotting; exact zeros would otherwise drop
# out of the axis limits entirely.
_LOG_FLOOR = 1e-18


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_mean_tracking(report: ExperimentReport, out_dir: str) -> str:
    """Empirical ensemble mean against the Kalman mean, per component."""
    t = report.t
    n = report.kalman.mu.shape[1]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i in range(n):
        (line,) = ax.plot(t, report.kalman.mu[:, i], lw=1.4, label=f"kalman mu[{i}]")
        ax.plot(t, report.emp_mean[:, i], lw=0.9, ls="--", color=line.get_color(),
                label=f"ensemble mean[{i}]")
    ax.set_xlabel("t")
    ax.set_ylabel("state estimate")
    ax.legend(fontsize=8)
    ax.set_title(f"{report.label}: mean tracking")
    return _save(fig, out_dir, "mean_tracking.png")


def plot_error_trace(report: ExperimentReport, out_dir: str) -> str:
    """Covariance and transport errors over time on a log scale."""
    t = report.t
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(t, np.maximum(report.cov_rel_err, _LOG_FLOOR), label="ensemble cov rel err")
    ax.plot(t, np.maximum(report.transport_rel_err, _LOG_FLOOR), label="cov transport rel err")
    if report.gauge_residual is not None:
        ax.plot(t, np.maximum(report.gauge_residual, _LOG_FLOOR), label="gauge residual")
    if report.pushforward_deviation is not None:
        ax.plot(t, np.maximum(report.pushforward_deviation, _LOG_FLOOR),
                label="pushforward deviation")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("relative error")
    ax.legend(fontsize=8)
    ax.set_title(f"{report.label}: exactness diagnostics")
    return _save(fig, out_dir, "error_trace.png")


def plot_cost_trace(report: ExperimentReport, out_dir: str) -> str:
    """Pointwise transport cost of the filter along the run."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(report.t, report.cost_trace)
    ax.set_xlabel("t")
    ax.set_ylabel("transport cost")
    ax.set_title(f"{report.label}: cost trace")
    return _save(fig, out_dir, "cost_trace.png")


def plot_covariance_trace(report: ExperimentReport, out_dir: str) -> str:
    """Diagonal of the empirical covariance against the Riccati solution."""
    t = report.t
    n = report.kalman.P.shape[1]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i in range(n):
        (line,) = ax.plot(t, report.kalman.P[:, i, i], lw=1.4, label=f"P[{i},{i}]")
        ax.plot(t, report.emp_cov[:, i, i], lw=0.9, ls="--", color=line.get_color(),
                label=f"ensemble cov[{i},{i}]")
    ax.set_xlabel("t")
    ax.set_ylabel("variance")
    ax.legend(fontsize=8)
    ax.set_title(f"{report.label}: covariance tracking")
    return _save(fig, out_dir, "covariance_trace.png")


def render_report_figures(report: ExperimentReport, out_dir: str) -> list[str]:
    """Write all figures for a report; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    return [
        plot_mean_tracking(report, out_dir),
        plot_covariance_trace(report, out_dir),
        plot_error_trace(report, out_dir),
        plot_cost_trace(report, out_dir),
    ]
