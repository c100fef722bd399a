"""Figure rendering for reports. Everything writes to a file and returns its path."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_trajectories", "plot_query_intervals", "plot_invariant_set"]


def plot_trajectories(trajectories, path, queries=None, x_eq=None, title="trajectories"):
    """Phase-plane view of planar trajectories; 1-d series fall back to time plots."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for i, traj in enumerate(trajectories):
        X = np.atleast_2d(np.asarray(traj, dtype=float))
        if X.shape[1] >= 2:
            ax.plot(X[:, 0], X[:, 1], lw=0.9, label=f"traj {i}")
            ax.plot(X[0, 0], X[0, 1], "o", ms=4, color=ax.lines[-1].get_color())
        else:
            ax.plot(X[:, 0], lw=0.9, label=f"traj {i}")
    if queries is not None:
        Q = np.atleast_2d(np.asarray(queries, dtype=float))
        ax.plot(Q[:, 0], Q[:, 1], "k*", ms=9, label="queries")
    if x_eq is not None and np.asarray(x_eq).size >= 2:
        ax.plot(x_eq[0], x_eq[1], "rx", ms=9, label="equilibrium")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_query_intervals(rows, path, title="per-coordinate bounds at query points"):
    """Interval widths per query, one panel per coordinate.

    rows: sequence of dicts with "query" and "intervals" ([lo, hi] per axis).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no query rows to plot")
    n = len(rows[0]["intervals"])
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 3.6), squeeze=False)
    idx = np.arange(len(rows))
    for axis in range(n):
        ax = axes[0][axis]
        los = np.array([r["intervals"][axis][0] for r in rows])
        his = np.array([r["intervals"][axis][1] for r in rows])
        mid = 0.5 * (los + his)
        ax.errorbar(idx, mid, yerr=np.vstack([mid - los, his - mid]), fmt="o", capsize=4)
        ax.set_xticks(idx)
        ax.set_xticklabels([f"q{i}" for i in idx], fontsize=7)
        ax.set_ylabel(f"coordinate {axis + 1}")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_invariant_set(inv_set, path, trajectories=None, starts=None, domain=None,
                       title="certified invariant set"):
    """Boundary of a planar invariant set with optional trajectories on top."""
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    B = inv_set.boundary_points(512)
    ax.plot(np.append(B[:, 0], B[0, 0]), np.append(B[:, 1], B[0, 1]), "b-", lw=1.4,
            label="certified boundary")
    ax.plot(inv_set.x_eq[0], inv_set.x_eq[1], "rx", ms=8, label="equilibrium")
    if trajectories is not None:
        for traj in trajectories:
            X = np.atleast_2d(np.asarray(traj, dtype=float))
            ax.plot(X[:, 0], X[:, 1], lw=0.7, alpha=0.8)
    if starts is not None:
        S = np.atleast_2d(np.asarray(starts, dtype=float))
        ax.plot(S[:, 0], S[:, 1], "g^", ms=6, label="verified starts")
    if domain is not None:
        (lo1, lo2), (hi1, hi2) = domain
        ax.plot([lo1, hi1, hi1, lo1, lo1], [lo2, lo2, hi2, hi2, lo2], "k--", lw=0.8,
                label="state constraints")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    ax.legend(fontsize=7, loc="best")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
