"""Deterministic SVG figures with CSV companions.

Every figure writes the plotted numbers next to it as CSV, and the SVG
output is byte-stable across runs (fixed hash salt, no embedded dates).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

import numpy as np

from .control import Trajectory
from .dynamics import ProblemSpec
from .gp import GPPosterior
from .synthesis import BarrierCandidate

__all__ = ["vector_field_plot", "std_sweep_plot", "trajectories_plot"]

plt.rcParams["svg.hashsalt"] = "gpbarrier"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _region_patches(ax, problem: ProblemSpec):
    for box, color, label in [(b, "tab:green", "initial") for b in problem.initial_boxes] + \
                             [(b, "tab:red", "unsafe") for b in problem.unsafe_boxes]:
        ax.add_patch(Rectangle(box.lo, *(box.hi - box.lo), fill=False,
                               edgecolor=color, linewidth=1.8, label=label))
    # deduplicate legend entries
    handles, labels = ax.get_legend_handles_labels()
    seen = {}
    for h, l in zip(handles, labels):
        seen.setdefault(l, h)
    ax.legend(seen.values(), seen.keys(), loc="upper right", fontsize=8)


def _csv_path(svg_path: Union[str, Path]) -> Path:
    return Path(svg_path).with_suffix(".csv")


def vector_field_plot(posterior: GPPosterior, problem: ProblemSpec,
                      out_svg: Union[str, Path], per_dim: int = 25) -> Path:
    """Quiver of the posterior mean drift over a std colormap (2-d states)."""
    if problem.n != 2:
        raise ValueError("vector field plots need a two-dimensional state")
    pts = problem.state_box.grid(per_dim)
    mu = posterior.mean(pts)
    std = np.sqrt(posterior.variance(pts).sum(axis=1))
    x1 = pts[:, 0].reshape(per_dim, per_dim)
    x2 = pts[:, 1].reshape(per_dim, per_dim)
    fig, ax = plt.subplots(figsize=(7, 6))
    mesh = ax.pcolormesh(x1, x2, std.reshape(per_dim, per_dim), shading="auto",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="posterior std (all outputs)")
    ax.quiver(pts[:, 0], pts[:, 1], mu[:, 0], mu[:, 1], color="white", width=0.0025)
    _region_patches(ax, problem)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("learned drift and model uncertainty")
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE_KW)
    plt.close(fig)
    with _csv_path(out_svg).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2"] + [f"mu{j + 1}" for j in range(mu.shape[1])] + ["std"])
        for p, m, s in zip(pts, mu, std):
            w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in m]
                       + [repr(float(s))])
    return Path(out_svg)


def std_sweep_plot(sweep: dict, out_svg: Union[str, Path]) -> Path:
    """Max-std bound against training set size, one line per output.

    ``sweep`` maps sample counts to per-output bound arrays.
    """
    sizes = sorted(sweep)
    values = np.array([sweep[n] for n in sizes])
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(values.shape[1]):
        ax.plot(sizes, values[:, j], marker="o", label=f"output {j + 1}")
    ax.set_xlabel("training samples")
    ax.set_ylabel("state-space-wide std bound")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE_KW)
    plt.close(fig)
    with _csv_path(out_svg).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_samples"] + [f"rho_bar{j + 1}" for j in range(values.shape[1])])
        for n, row in zip(sizes, values):
            w.writerow([n] + [repr(float(v)) for v in row])
    return Path(out_svg)


def trajectories_plot(problem: ProblemSpec, candidate: Optional[BarrierCandidate],
                      trajectories: Sequence[Trajectory],
                      out_svg: Union[str, Path], per_dim: int = 200) -> Path:
    """Closed-loop runs over the zero level set of the barrier (2-d states)."""
    if problem.n != 2:
        raise ValueError("trajectory plots need a two-dimensional state")
    fig, ax = plt.subplots(figsize=(7, 6))
    if candidate is not None:
        pts = problem.state_box.grid(per_dim)
        Bv = candidate.eval(pts).reshape(per_dim, per_dim)
        x1 = pts[:, 0].reshape(per_dim, per_dim)
        x2 = pts[:, 1].reshape(per_dim, per_dim)
        ax.contourf(x1, x2, Bv, levels=[-np.inf, 0.0], colors=["#cfe8ff"], alpha=0.6)
        ax.contour(x1, x2, Bv, levels=[0.0], colors="tab:blue", linewidths=2)
    for tr in trajectories:
        ax.plot(tr.X[:, 0], tr.X[:, 1], color="black", linewidth=0.9, alpha=0.8)
        ax.plot(tr.X[0, 0], tr.X[0, 1], marker="o", color="black", markersize=3)
    _region_patches(ax, problem)
    ax.set_xlim(problem.state_box.lo[0], problem.state_box.hi[0])
    ax.set_ylim(problem.state_box.lo[1], problem.state_box.hi[1])
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("closed-loop trajectories and barrier zero level set")
    fig.tight_layout()
    fig.savefig(out_svg, **_SAVE_KW)
    plt.close(fig)
    with _csv_path(out_svg).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "t", "x1", "x2", "B"])
        for i, tr in enumerate(trajectories):
            for k in range(tr.t.shape[0]):
                w.writerow([i, repr(float(tr.t[k])), repr(float(tr.X[k, 0])),
                            repr(float(tr.X[k, 1])), repr(float(tr.B[k]))])
    return Path(out_svg)
