"""Figure rendering for the CLI report paths (Agg backend, PNG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .guarantees import GuaranteeReport
from .harness import SimulationLog


def figure_dispatch(log: SimulationLog, path):
    """Three panels: grid import vs. net load, SOC, and running peaks."""
    T = log.T
    t0 = log.spec.window.start_step
    dt = log.spec.tariff.dt_hours
    hours = np.arange(T) * dt
    net = -log.spec.series.c[t0 : t0 + T]

    fig, axes = plt.subplots(3, 1, figsize=(10, 8), sharex=True)
    ax = axes[0]
    ax.plot(hours, net, color="0.6", lw=0.8, label="net load")
    ax.plot(hours, log.sys.u[:, 1], lw=0.9, label=f"import ({log.method})")
    if log.ref is not None:
        ax.plot(hours, log.ref.u[:, 1], lw=0.9, ls="--", label=f"import ({log.ref_method})")
    ax.set_ylabel("kW")
    ax.legend(loc="upper right", fontsize=8)

    ax = axes[1]
    ax.plot(hours, log.sys.states[1:, 0], lw=0.9, label=log.method)
    if log.ref is not None:
        ax.plot(hours, log.ref.states[1:, 0], lw=0.9, ls="--", label=log.ref_method)
    ax.axhline(log.spec.params.soc_min, color="r", lw=0.5)
    ax.axhline(log.spec.params.soc_max, color="r", lw=0.5)
    ax.set_ylabel("SOC")
    ax.legend(loc="upper right", fontsize=8)

    ax = axes[2]
    ax.plot(hours, log.sys.states[1:, 1], lw=0.9, label="monthly peak")
    ax.plot(hours, log.sys.states[1:, 2], lw=0.9, label="on-peak peak")
    if log.ref is not None:
        ax.plot(hours, log.ref.states[1:, 1], lw=0.9, ls="--", label="ref monthly peak")
    ax.set_ylabel("kW")
    ax.set_xlabel("hours")
    ax.legend(loc="lower right", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_cost_comparison(table: dict, path):
    """Grouped bars of total cost per (method, case) combination."""
    labels = [f"{m}\n{c}" for (m, c) in table]
    totals = [bd.total for bd in table.values()]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels)), 4))
    ax.bar(np.arange(len(labels)), totals, color="steelblue")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("total cost [$]")
    for i, v in enumerate(totals):
        ax.text(i, v, f"{v:,.0f}", ha="center", va="bottom", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_guarantees(report: GuaranteeReport, path):
    """Per-step decrease residuals and running gap vs. its bound."""
    fig, axes = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
    ax = axes[0]
    ax.plot(np.arange(len(report.r)), report.r, lw=0.7)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_ylabel("decrease residual [$]")
    ax = axes[1]
    steps = np.arange(report.T)
    ax.plot(steps, report.g_running, lw=0.9, label="running avg gap g")
    ax.plot(steps, report.eps_running, lw=0.9, ls="--", label="bound eps")
    ax.set_xlabel("step")
    ax.set_ylabel("$ / step")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_oracle(u2: np.ndarray, net_load: np.ndarray, dt: float, path):
    """Oracle import against net load over the full window."""
    hours = np.arange(len(u2)) * dt
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.plot(hours, net_load, color="0.6", lw=0.8, label="net load")
    ax.plot(hours, u2, lw=0.9, label="oracle import")
    ax.set_xlabel("hours")
    ax.set_ylabel("kW")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
