"""Figure rendering for the report path.

Every renderer consumes an emitted text table (never live objects), so the
figures are always reproducible downstream artifacts of the delimited
output. All rendering uses the non-interactive Agg backend and writes PNG.
"""

from __future__ import annotations


import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .tables import read_table

_HEAD_COLORS = {"cdl": "tab:blue", "dqc": "tab:orange"}


def render_loss_curves(curves_path, out_path) -> None:
    header, rows, _ = read_table(curves_path)
    idx = {name: i for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(7, 4))
    for split, style in (("train", "-"), ("val", "o--")):
        pts = [
            (int(r[idx["step"]]), float(r[idx["loss"]]))
            for r in rows
            if r[idx["split"]] == split
        ]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, style, label=split, markersize=4)
    ax.set_xlabel("training step")
    ax.set_ylabel("mean BCE loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_auroc_comparison(comparison_path, out_path) -> None:
    header, rows, _ = read_table(comparison_path)
    idx = {name: i for i, name in enumerate(header)}
    labels = [r[idx["label"]] for r in rows]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(labels)), 4))
    for head, offset in (("cdl", -0.15), ("dqc", 0.15)):
        means = [float(r[idx[f"{head}_mean"]]) for r in rows]
        stds = [float(r[idx[f"{head}_std"]]) for r in rows]
        ax.errorbar(
            [i + offset for i in x], means, yerr=stds, fmt="o",
            color=_HEAD_COLORS[head], label=head, capsize=3,
        )
    ax.axhline(0.5, color="gray", linestyle=":", linewidth=1)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("AUROC")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_volcano(volcano_path, out_path) -> None:
    header, rows, metadata = read_table(volcano_path)
    idx = {name: i for i, name in enumerate(header)}
    threshold = float(metadata.get("significance_threshold_neg_log10_p", "1.30103"))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for r in rows:
        if not r[idx["log2_pct_diff"]]:
            continue  # non-positive diff: flagged in the table, no transform
        x = float(r[idx["log2_pct_diff"]])
        y = float(r[idx["neg_log10_p"]])
        ax.scatter([x], [y], color="tab:purple")
        ax.annotate(r[idx["label"]], (x, y), fontsize=7,
                    textcoords="offset points", xytext=(4, 3))
    ax.axhline(threshold, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("log2(% diff AUROC)")
    ax.set_ylabel("-log10(p)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_bench_scaling(results_path, out_path) -> None:
    header, rows, _ = read_table(results_path)
    idx = {name: i for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(6, 4.5))
    heads = sorted({r[idx["head"]] for r in rows})
    for head in heads:
        pts = sorted(
            (int(r[idx["n"]]), float(r[idx["mean"]]), float(r[idx["std"]]))
            for r in rows
            if r[idx["head"]] == head
        )
        ns = [p[0] for p in pts]
        means = [p[1] for p in pts]
        stds = [p[2] for p in pts]
        ax.errorbar(ns, means, yerr=stds, fmt="o-",
                    color=_HEAD_COLORS.get(head, None), label=head, capsize=3)
    ax.set_yscale("log")
    ax.set_xlabel("label count n")
    ax.set_ylabel("seconds per training step")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
