"""Figures for run-matrix reports. matplotlib is imported lazily with the Agg backend."""
from __future__ import annotations

import os
from typing import Dict, List, Optional, Sequence


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # plotting is optional
        raise RuntimeError("figures need matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.labelsize": 9, "legend.fontsize": 7,
                         "svg.hashsalt": "sclm", "figure.dpi": 100})
    return plt


def pareto_scatter(rows: Sequence[dict], path: str, title: Optional[str] = None) -> str:
    """Scatter of the two clause scores of every candidate in one pool, front highlighted."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    x = [float(r["e1"]) for r in rows]
    y = [float(r["e2"]) for r in rows]
    front = [str(r["pareto"]) in ("True", "true", "1") for r in rows]
    ax.scatter([a for a, f in zip(x, front) if not f], [b for b, f in zip(y, front) if not f],
               s=14, c="0.6", label="candidate")
    ax.scatter([a for a, f in zip(x, front) if f], [b for b, f in zip(y, front) if f],
               s=18, c="C0", label="Pareto front")
    markers = {"SCLM-SIM-utilitarian": "s", "SCLM-SIM-nash": "D", "SCLM-SIM-egalitarian": "^", "DLM": "x"}
    for r in rows:
        for m in filter(None, str(r.get("chosen_by", "")).split(";")):
            if m in markers:
                style = {"c": "C3"} if m == "DLM" else {"facecolors": "none", "edgecolors": "k"}
                ax.scatter([float(r["e1"])], [float(r["e2"])], marker=markers[m], s=50, label=m, **style)
    handles, labels = ax.get_legend_handles_labels()
    seen = dict(zip(labels, handles))
    ax.legend(seen.values(), seen.keys(), loc="best")
    ax.axhline(0, lw=0.5, c="k")
    ax.axvline(0, lw=0.5, c="k")
    ax.set_xlabel("clause 1: % change")
    ax.set_ylabel("clause 2: % change")
    if title:
        ax.set_title(title, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def method_bars(report: dict, path: str, metric: str = "min_pct_k1") -> str:
    """Mean of one aggregate per method with standard-error bars."""
    plt = _pyplot()
    methods = sorted(report["methods"])
    means = [report["methods"][m][metric][0] for m in methods]
    errs = [report["methods"][m][metric][1] for m in methods]
    fig, ax = plt.subplots(figsize=(max(3.0, 0.45 * len(methods) + 1.0), 3.0))
    ax.bar(range(len(methods)), means, yerr=errs, color="C0", capsize=2)
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=60, ha="right", fontsize=6)
    ax.set_ylabel(metric)
    ax.axhline(0, lw=0.5, c="k")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def distribution_comparison(dists: Dict[str, "object"], category: str, path: str) -> str:
    """Per-bucket utility of one category under several policies."""
    plt = _pyplot()
    import numpy as np

    fig, ax = plt.subplots(figsize=(3.6, 2.8))
    names = list(dists)
    width = 0.8 / max(1, len(names))
    for k, name in enumerate(names):
        v = np.asarray(dists[name].category(category))
        ax.bar(np.arange(len(v)) + k * width, v, width=width, label=name)
    ax.set_xlabel(f"{category} bucket")
    ax.set_ylabel("discounted utility")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def report_figures(report: dict, scatter: Sequence[dict], out_dir: str, max_scatter: int = 4) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for metric in ("sum_pct_k1", "min_pct_k1", "unintended_shift", "utility_change_pct"):
        if report["methods"] and all(metric in row for row in report["methods"].values()):
            paths.append(method_bars(report, os.path.join(out_dir, f"methods-{metric}.png"), metric))
    groups: Dict[tuple, list] = {}
    for r in scatter:
        groups.setdefault((r["instance"], r["prompt"]), []).append(r)
    for (inst, prompt), rows in list(groups.items())[:max_scatter]:
        fname = f"pareto-{inst}-{prompt}.png".replace("+", "_")
        paths.append(pareto_scatter(rows, os.path.join(out_dir, fname), f"{inst} {prompt}"))
    return paths
