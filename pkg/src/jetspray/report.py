"""Figure rendering for CLI artifacts.

Every CLI command that writes delimited output can also render a matplotlib
figure next to it; these helpers keep all plotting in one place and off the
library's numerical path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def geodesic_figure(record, path) -> None:
    """Base-chart trajectory plus block magnitudes over time."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    base = record.pos[:, 0]
    if record.n >= 2:
        axes[0].plot(base[:, 0], base[:, 1], lw=1.2)
        axes[0].scatter([base[0, 0]], [base[0, 1]], s=12, zorder=3)
        axes[0].set_xlabel("x1")
        axes[0].set_ylabel("x2")
    else:
        axes[0].plot(record.t_grid, base[:, 0], lw=1.2)
        axes[0].set_xlabel("t")
        axes[0].set_ylabel("x")
    axes[0].set_title(f"base path ({record.spray_label})")
    for m in range(1 << record.r):
        axes[1].plot(record.t_grid, np.linalg.norm(record.pos[:, m], axis=1),
                     lw=1.0, label=f"block {m}")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("|block|")
    axes[1].set_title(f"order-{record.r} block norms")
    if record.r <= 3:
        axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def curve_figure(t_grid, values, path, title="derived curve") -> None:
    """Component traces of a (T, 2^r, n) block array."""
    fig, ax = plt.subplots(figsize=(7, 4))
    T, masks, n = values.shape
    for m in range(masks):
        for i in range(n):
            ax.plot(t_grid, values[:, m, i], lw=0.9,
                    label=f"[{m}][{i}]" if masks * n <= 12 else None)
    ax.set_xlabel("t")
    ax.set_title(title)
    if masks * n <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def tensor_figure(t_grid, frame_comps, path, title="frame components") -> None:
    """Traces of (T, m, m) parallel-frame matrices."""
    fig, ax = plt.subplots(figsize=(7, 4))
    m = frame_comps.shape[1]
    for i in range(m):
        for j in range(m):
            ax.plot(t_grid, frame_comps[:, i, j], lw=1.0, label=f"J[{i}][{j}]")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def verify_figure(report, path) -> None:
    """Log-scale residual bars against thresholds for a check report."""
    rows = [r for r in report if r["status"] != "skip"]
    if not rows:
        return
    names = [r["check"] for r in rows]
    res = np.array([max(r["residual"], 1e-17) for r in rows])
    thr = np.array([max(r["threshold"], 1e-17) for r in rows])
    colors = ["tab:green" if r["status"] == "pass" else "tab:red" for r in rows]
    fig, ax = plt.subplots(figsize=(8, 0.28 * len(rows) + 1.5))
    ypos = np.arange(len(rows))
    ax.barh(ypos, res, color=colors, height=0.6)
    ax.scatter(thr, ypos, marker="|", s=80, color="k", label="threshold")
    ax.set_xscale("log")
    ax.set_yticks(ypos)
    ax.set_yticklabels(names, fontsize=6)
    ax.invert_yaxis()
    ax.set_xlabel("residual")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def chart_figure(chart, path, samples: int = 7) -> None:
    """Coordinate net of a tubular chart (n = 2 only)."""
    V = chart.V
    if V.S.n != 2:
        return
    fig, ax = plt.subplots(figsize=(5.5, 5))
    tg = V.t_grid()
    for s in np.linspace(-0.9 * chart.eps, 0.9 * chart.eps, samples):
        P, _ = V.sample(np.array([s]))
        ax.plot(P[:, 0], P[:, 1], lw=0.8,
                color="tab:blue" if abs(s) > 1e-15 else "k")
    for k in np.linspace(0, len(tg) - 1, samples).astype(int):
        line = [V.sample(np.array([s]))[0][k]
                for s in np.linspace(-0.9 * chart.eps, 0.9 * chart.eps, 15)]
        line = np.array(line)
        ax.plot(line[:, 0], line[:, 1], lw=0.6, color="tab:orange")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"tubular chart, eps={chart.eps:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
