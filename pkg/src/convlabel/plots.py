"""Figure rendering for benchmark and evaluation reports.

Uses the non-interactive matplotlib backend and writes PNG files with
fixed metadata, so repeated runs produce byte-identical images.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .benchmark import panel_data

PNG_METADATA = {"Software": "convlabel"}

_AXIS_LABEL = {
    "instants": "scored instants",
    "ratio": "cap / instants",
    "set_size": "label-set size",
}


def plot_bench(rows: Sequence[dict], path) -> None:
    """Runtime panels: one subplot per swept benchmark axis."""
    panels = panel_data(rows)["panels"]
    n = max(1, len(panels))
    fig, axes = plt.subplots(1, n, figsize=(5.0 * n, 4.0), squeeze=False)
    if not panels:
        axes[0][0].text(0.5, 0.5, "no swept axis", ha="center", va="center")
        axes[0][0].set_axis_off()
    for ax, panel in zip(axes[0], panels):
        log_x = panel["axis"] != "ratio"
        for series in panel["series"]:
            ax.plot(series["x"], series["y"], marker="o", label=series["backend"])
        if log_x:
            ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(_AXIS_LABEL[panel["axis"]])
        ax.set_ylabel("median seconds")
        fixed = ", ".join(f"{k}={v}" for k, v in sorted(panel["fixed"].items()))
        ax.set_title(f"runtime vs {_AXIS_LABEL[panel['axis']]}\n({fixed})", fontsize=9)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def plot_eval(report: dict, path) -> None:
    """Per-class instance and signal AUC bars from an evaluation report."""
    per_class = report.get("per_class", [])
    classes = [row["class"] for row in per_class]
    fig, ax = plt.subplots(figsize=(max(5.0, 0.8 * len(classes) + 2.0), 4.0))
    width = 0.38
    for shift, key, label in (
        (-width / 2, "instance_auc", "instance AUC"),
        (width / 2, "signal_auc", "signal AUC"),
    ):
        values = [row.get(key) for row in per_class]
        xs = [c + shift for c, v in zip(classes, values) if v is not None and v == v]
        ys = [v for v in values if v is not None and v == v]
        if xs:
            ax.bar(xs, ys, width=width, label=label)
    ax.set_xlabel("class")
    ax.set_ylabel("AUC")
    ax.set_ylim(0.0, 1.05)
    if classes:
        ax.set_xticks(classes)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def plot_trace(trace: Sequence[float], path) -> None:
    """Training-objective trace over iterations."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(range(len(trace)), trace, marker=".")
    ax.set_xlabel("iteration")
    ax.set_ylabel("regularized log-likelihood")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
