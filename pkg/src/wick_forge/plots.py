"""Figures written next to the delimited outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}  # keep PNG bytes free of version strings


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def decay_plot(table, path) -> Path:
    """Normalized distance between the p-product and the Wick square against p."""
    ps = [p for p, _ in table]
    rs = [r for _, r in table]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(ps, rs, "o-", color="k")
    ax.set_xlabel("p")
    ax.set_ylabel("relative distance in the -2 norm")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return Path(path)


def threshold_plot(curves: dict, marks: dict, path) -> Path:
    """lambda_max(M_p(t)) against t with the 1/4 level, T and t* marked per p."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for i, (p, (ts, lm)) in enumerate(sorted(curves.items())):
        line, = ax.plot(ts, lm, label=f"p={p:g}")
        T, t_star = marks[p]
        ax.axvline(T, color=line.get_color(), ls=":", lw=1)
        if np.isfinite(t_star) and t_star <= ts[-1]:
            ax.plot([t_star], [0.25], "x", color=line.get_color())
    ax.axhline(0.25, color="gray", ls="--", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("largest eigenvalue of M_p(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return Path(path)


def delta_plot(ts, values: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for p, v in sorted(values.items()):
        ax.plot(ts, v, label=f"p={p:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("|delta_t^p|^2 (truncated)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return Path(path)
