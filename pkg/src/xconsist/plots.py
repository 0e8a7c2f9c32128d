"""Static SVG plot emission for CLI reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .calibration import ReliabilityMap  # noqa: E402
from .metrics import ConsistencyReport  # noqa: E402
from .simulator import SweepRow  # noqa: E402


def _save(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.svg")
    fig.savefig(tmp, format="svg")
    plt.close(fig)
    tmp.replace(path)


def plot_ck_curve(report: ConsistencyReport, path: str | Path) -> None:
    ks = sorted(report.consistency_at_k)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [report.consistency_at_k[k] for k in ks], marker="o",
            label="consistency")
    pks = sorted(report.preference_accuracy_at_k)
    ax.plot(pks, [report.preference_accuracy_at_k[k] for k in pks], marker="s",
            label="preference accuracy")
    ax.set_xlabel("difficulty k (1 = hardest)")
    ax.set_ylabel("fraction")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{report.anchor} vs {report.evaluation}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def plot_sweep_heatmap(rows: list[SweepRow], path: str | Path) -> None:
    anchors = sorted({r.anchor_acc for r in rows})
    targets = sorted({r.target_acc for r in rows})
    grid = [[0.0] * len(targets) for _ in anchors]
    lookup = {(r.anchor_acc, r.target_acc): r.c1_mc for r in rows}
    for i, a in enumerate(anchors):
        for j, t in enumerate(targets):
            grid[i][j] = lookup[(a, t)]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(grid, origin="lower", vmin=0.0, vmax=1.0, cmap="viridis",
                   extent=(targets[0], targets[-1], anchors[0], anchors[-1]),
                   aspect="auto")
    ax.set_xlabel("target accuracy")
    ax.set_ylabel("anchor accuracy")
    ax.set_title(f"simulated top-1 consistency ({rows[0].scenario.value} errors)")
    fig.colorbar(im, ax=ax, label="consistency")
    _save(fig, path)


def plot_reliability(rmap: ReliabilityMap, path: str | Path) -> None:
    xs = [m for m in rmap.bin_mean_loglik if m is not None]
    ys = [m for m in rmap.bin_mean_quality if m is not None]
    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(6, 6), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]},
    )
    ax.scatter(xs, ys, label="bin means")
    if not rmap.degenerate_fit:
        lo, hi = min(xs), max(xs)
        ax.plot(
            [lo, hi],
            [rmap.fit_slope * lo + rmap.fit_intercept,
             rmap.fit_slope * hi + rmap.fit_intercept],
            color="tab:red",
            label=f"fit: slope={rmap.fit_slope:.4g}, mse={rmap.fit_mse:.3g}",
        )
    ax.set_ylabel("mean quality")
    ax.legend()
    ax.grid(True, alpha=0.3)
    centers = [
        (rmap.bin_edges[i] + rmap.bin_edges[i + 1]) / 2
        for i in range(len(rmap.bin_count))
    ]
    ax2.plot(centers, rmap.cumulative_fraction, drawstyle="steps-post")
    ax2.set_xlabel("mean log-likelihood")
    ax2.set_ylabel("cumulative fraction")
    ax2.set_ylim(0.0, 1.05)
    ax2.grid(True, alpha=0.3)
    _save(fig, path)
