"""Figure rendering for experiment and sweep reports.

Writes matplotlib figures straight to files (Agg backend, no display),
one curve per method, so a benchmark run leaves a picture next to its
delimited table.
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_STYLES = {
    "sourceSVM": dict(color="#888888", marker="s", linestyle="--"),
    "targetSVM": dict(color="#444444", marker="o", linestyle="--"),
    "mmdt": dict(color="#1f77b4", marker="^", linestyle="-"),
    "mmdtl2_linear": dict(color="#d62728", marker="o", linestyle="-"),
    "mmdtl2_rbf": dict(color="#2ca02c", marker="v", linestyle="-"),
    "mmdtl2_poly": dict(color="#9467bd", marker="d", linestyle="-"),
}


def render_experiment_figure(report, path):
    """Accuracy-vs-M curves with std error bars; returns the path written."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for method in report.config.methods:
        xs, means, stds = [], [], []
        for m in report.config.m_values:
            cell = report.cells[(m, method)]
            if cell.skipped or not cell.accuracies:
                continue
            xs.append(m)
            means.append(100.0 * cell.mean)
            stds.append(0.0 if math.isnan(cell.std) else 100.0 * cell.std)
        if not xs:
            continue
        style = _STYLES.get(method, {})
        ax.errorbar(xs, means, yerr=stds, label=method, capsize=2.5, **style)
    ax.set_xlabel("target training samples per class")
    ax.set_ylabel("accuracy (%)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep_figure(report, path):
    """Accuracy against the swept cost on a log axis; events annotated."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    xs, means, stds, ev_x = [], [], [], []
    for value in report.values:
        cell = report.cells[value]
        if cell.accuracies:
            xs.append(value)
            means.append(100.0 * cell.mean)
            stds.append(0.0 if math.isnan(cell.std) else 100.0 * cell.std)
        if cell.events:
            ev_x.append(value)
    ax.errorbar(xs, means, yerr=stds, color="#d62728", marker="o", capsize=2.5)
    for value in ev_x:
        ax.axvline(value, color="#888888", alpha=0.35, linestyle=":")
    ax.set_xscale("log")
    ax.set_xlabel(report.parameter)
    ax.set_ylabel("accuracy (%)")
    ax.set_title(f"{report.method}, {report.m_per_class} target samples per class")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
