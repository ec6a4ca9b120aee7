"""Figures for simulation runs, sweeps and the benchmark table (files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trajectory(result, path, labels=None) -> Path:
    """State components, applied control and transmission instants."""
    n = result.x.shape[1]
    labels = labels or [f"x{i + 1}" for i in range(n)]
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for i in range(n):
        ax0.plot(result.t, result.x[:, i], lw=1.2, label=labels[i])
    ax0.set_ylabel("state")
    ax0.legend(loc="upper right", fontsize=8, ncol=min(n, 4))
    ax0.grid(alpha=0.3)
    ax1.step(result.t, result.u[:, 0], where="post", lw=1.0, color="k")
    sent = np.asarray(result.transmitted, dtype=bool)
    if sent.any():
        ax1.plot(result.t[sent], result.u[sent, 0], "|", color="tab:red", ms=8, label="sent")
        ax1.legend(loc="upper right", fontsize=8)
    ax1.set_xlabel("t [s]")
    ax1.set_ylabel("applied u")
    ax1.grid(alpha=0.3)
    ax0.set_title(f"{result.scenario.value}: SCS = {result.scs}", fontsize=10)
    return _save(fig, path)


def plot_sweep(rows, path) -> Path:
    """Certified h_max and mean SCS against sigma."""
    sig = np.array([r.sigma for r in rows])
    h = np.array([np.nan if r.h_max is None else r.h_max for r in rows])
    scs = np.array([np.nan if r.scs_mean is None else r.scs_mean for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(sig, h, "o-", ms=3, color="tab:blue")
    ax.set_xlabel("sigma")
    ax.set_ylabel("h_max [s]", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(sig, scs, "s-", ms=3, color="tab:orange")
    ax2.set_ylabel("mean SCS", color="tab:orange")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_table(report, path) -> Path:
    """Mean SCS per cell next to the reference counts."""
    rows = [r for r in report.rows() if r["scs_ref"] is not None]
    names = [f"{r['strategy']}\n{r['column']}" for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(8, 3.8))
    mean = [np.nan if r["scs_mean"] is None else r["scs_mean"] for r in rows]
    lo = [0 if r["scs_min"] is None else m - r["scs_min"] for r, m in zip(rows, mean)]
    hi = [0 if r["scs_max"] is None else r["scs_max"] - m for r, m in zip(rows, mean)]
    ax.bar(x - 0.2, mean, 0.4, yerr=[lo, hi], capsize=3, label="simulated (min..max)")
    ax.bar(x + 0.2, [r["scs_ref"] for r in rows], 0.4, label="reference")
    ax.set_xticks(x)
    ax.set_xticklabels(names, fontsize=7)
    ax.set_ylabel("sent control signals")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)
