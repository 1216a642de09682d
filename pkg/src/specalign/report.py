"""Experiment outputs: JSONL metrics, the accuracy-curve CSV, and figures.

Figures are rendered straight to files with the Agg backend so runs work
headless; they land next to the delimited outputs in the run directory.
"""

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

METRIC_FIELDS = (
    "epoch", "loss_total", "loss_cls", "loss_adv", "loss_gsa",
    "loss_nap", "loss_con", "acc_source", "acc_target", "a_distance",
)


def write_metrics_jsonl(report, path):
    """One JSON record per epoch, keys in a fixed order."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in report.records:
            data = record.as_dict()
            ordered = {key: data[key] for key in METRIC_FIELDS}
            ordered["acc_source_per_domain"] = data["acc_source_per_domain"]
            ordered["rejected_steps"] = data["rejected_steps"]
            fh.write(json.dumps(ordered, sort_keys=False) + "\n")


def write_curve_csv(report, path):
    """Accuracy curve for plotting: epoch, source/target accuracy, A-distance."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "acc_source", "acc_target", "a_distance"])
        for record in report.records:
            writer.writerow([
                record.epoch,
                repr(record.acc_source),
                repr(record.acc_target),
                repr(record.a_distance),
            ])


def render_figures(report, outdir):
    """Accuracy and loss curves as PNGs; returns the written paths."""
    epochs = [r.epoch for r in report.records]
    paths = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(epochs, [r.acc_source for r in report.records], label="source accuracy")
    ax.plot(epochs, [r.acc_target for r in report.records], label="target accuracy")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r.a_distance for r in report.records],
             color="tab:red", linestyle="--", label="A-distance")
    ax2.set_ylabel("A-distance")
    ax2.set_ylim(0.0, 2.05)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="lower right", fontsize=8)
    fig.tight_layout()
    acc_path = os.path.join(outdir, "accuracy.png")
    fig.savefig(acc_path, dpi=120)
    plt.close(fig)
    paths.append(acc_path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in ("loss_total", "loss_cls", "loss_adv", "loss_gsa", "loss_nap", "loss_con"):
        ax.plot(epochs, [getattr(r, name) for r in report.records],
                label=name.replace("loss_", ""))
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss (epoch mean)")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    loss_path = os.path.join(outdir, "losses.png")
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)
    paths.append(loss_path)
    return paths
