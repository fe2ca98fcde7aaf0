"""Figure rendering for experiment artifacts.

Every plot is rendered straight to a file next to the CSV it visualizes;
the CSVs remain the canonical output.  Uses the Agg backend so rendering
works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .learn import QTrace


def plot_qtrace(trace: QTrace, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    iters = [r.iteration for r in trace.rows]
    ax.fill_between(iters, [r.ci_low for r in trace.rows],
                    [r.ci_high for r in trace.rows], alpha=0.25, lw=0,
                    label="confidence band")
    ax.plot(iters, [r.q for r in trace.rows], lw=1.5, label="estimate")
    ax.set_xlabel("iteration")
    ax.set_ylabel("satisfaction probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_qtrace_overlay(traces: dict[str, QTrace], path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for name, trace in traces.items():
        ax.plot([r.iteration for r in trace.rows], [r.q for r in trace.rows],
                lw=1.5, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("satisfaction probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_heatmap_panels(sch, action: str, times, grids, path) -> None:
    """Panels of one action's probability over the state grid, one per time.

    ``grids`` is one evaluation array per state variable.  Supported for 1-
    and 2-variable models; the CSV covers higher dimensions.
    """
    a_idx = sch.actions.index(action)
    odd = len(times)
    cols = min(3, odd)
    nrows = (odd + cols - 1) // cols
    if len(grids) == 1:
        fig, axes = plt.subplots(nrows, cols, figsize=(3.2 * cols, 2.6 * nrows),
                                 squeeze=False, sharex=True, sharey=True)
        xs = grids[0]
        for k, t in enumerate(times):
            ax = axes[k // cols][k % cols]
            ax.plot(xs, [sch.action_probabilities((x,), t)[a_idx] for x in xs])
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(f"t = {t:g}", fontsize=9)
            ax.grid(alpha=0.3)
        for k in range(odd, nrows * cols):
            axes[k // cols][k % cols].axis("off")
        fig.supxlabel(sch.basis.variables[0].name if sch.basis.variables else "x")
        fig.supylabel(f"p({action})")
    elif len(grids) == 2:
        fig, axes = plt.subplots(nrows, cols, figsize=(3.2 * cols, 2.8 * nrows),
                                 squeeze=False, sharex=True, sharey=True)
        xs, ys = grids
        mesh = None
        for k, t in enumerate(times):
            ax = axes[k // cols][k % cols]
            z = np.array([[sch.action_probabilities((x, y), t)[a_idx] for x in xs]
                          for y in ys])
            mesh = ax.pcolormesh(xs, ys, z, vmin=0.0, vmax=1.0, cmap="gray",
                                 shading="nearest")
            ax.set_title(f"t = {t:g}", fontsize=9)
        for k in range(odd, nrows * cols):
            axes[k // cols][k % cols].axis("off")
        names = ([v.name for v in sch.basis.variables]
                 if sch.basis.variables else ["x1", "x2"])
        fig.supxlabel(names[0])
        fig.supylabel(names[1])
        if mesh is not None:
            fig.colorbar(mesh, ax=axes, shrink=0.8, label=f"p({action})")
    else:
        raise ValueError("heatmap figures support 1 or 2 state variables")
    fig.savefig(path, dpi=150)
    plt.close(fig)
