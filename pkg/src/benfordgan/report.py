"""Figure rendering for evaluation reports.

Figures land next to the delimited outputs so a run directory is
self-contained: per-group accuracy bars for a single report, and the
accuracy-versus-dimensionality views for a parameter sweep.
"""

import matplotlib

matplotlib.use("Agg")

import json

import matplotlib.pyplot as plt
import numpy as np

from ._version import __version__

MARGINAL_PANELS = (
    ("qfs_single", "single quantization table"),
    ("qfs_all", "all quantization tables"),
    ("bases_single", "single base"),
    ("bases_all", "all bases"),
    ("freqs_single", "single frequency"),
    ("freqs_all", "all frequencies"),
)


def _png_metadata(run_config):
    meta = {"Software": f"benfordgan {__version__}"}
    if run_config is not None:
        meta["Description"] = json.dumps(run_config, sort_keys=True)
    return meta


def save_group_accuracy(report, path, dpi=150, run_config=None):
    """Horizontal bars, one per group, with the unweighted average marked."""
    groups = [r.group for r in report.per_group]
    accs = [r.accuracy for r in report.per_group]
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.4 * len(groups) + 1.2)))
    ax.barh(np.arange(len(groups)), accs, color="#4878d0")
    ax.axvline(report.average, color="#d65f5f", linestyle="--", label=f"avg {report.average:.4f}")
    ax.set_yticks(np.arange(len(groups)), groups)
    ax.set_xlim(0, 1.02)
    ax.set_xlabel("accuracy")
    ax.set_title(report.scenario)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi, metadata=_png_metadata(run_config))
    plt.close(fig)
    return path


def save_sweep_dimensionality(result, path, dpi=150, run_config=None):
    """Average accuracy of every setup against its feature-vector length."""
    dims = [cfg.dimensionality for cfg in result.configs]
    accs = [rep.average for rep in result.reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(dims, accs, s=12, alpha=0.5, color="#4878d0")
    best = result.best_config.dimensionality
    ax.scatter([best], [result.best_report.average], s=60, color="#d65f5f", zorder=3,
               label=f"best ({best} features)")
    ax.set_xlabel("feature vector length")
    ax.set_ylabel("average accuracy")
    ax.set_title("accuracy vs. feature dimensionality")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi, metadata=_png_metadata(run_config))
    plt.close(fig)
    return path


def save_sweep_marginals(result, path, dpi=150, run_config=None):
    """Six panels: accuracy vs. length with one parameter set held fixed."""
    rows = result.marginal_rows()
    fig, axes = plt.subplots(3, 2, figsize=(9, 10), sharey=True)
    for ax, (panel, title) in zip(axes.ravel(), MARGINAL_PANELS):
        pts = [(dim, acc) for p, dim, acc, _ in rows if p == panel]
        if pts:
            dims, accs = zip(*pts)
            ax.scatter(dims, accs, s=10, alpha=0.6, color="#4878d0")
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("feature vector length")
        ax.set_ylabel("avg accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi, metadata=_png_metadata(run_config))
    plt.close(fig)
    return path
