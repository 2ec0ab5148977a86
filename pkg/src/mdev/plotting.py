"""Figures written next to the CSV outputs.

Rendering uses the non-interactive Agg backend with fixed rc settings so a
given report always produces the same PNG bytes.
"""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def sweep_figure(report: dict) -> bytes:
    """Left: ratio against ``theta - theta0`` per ``n``. Right: sup-ratio against ``n``."""
    theta0 = np.asarray(report["config"]["theta0"], dtype=float)
    with plt.rc_context(STYLE):
        fig, (ax_l, ax_r) = plt.subplots(1, 2, figsize=(9, 3.6))
        for n in report["config"]["n_grid"]:
            rows = [r for r in report["rows"] if r["n"] == n and r["status"] == "ok"]
            if not rows:
                continue
            offs = np.array([np.linalg.norm(np.asarray(r["theta"]) - theta0) * (1 if r["theta"][0] >= theta0[0] else -1) for r in rows])
            ratio = np.array([r["ratio"] for r in rows])
            se = np.array([r["ratio_std_error"] for r in rows])
            order = np.argsort(offs)
            b_n = rows[0]["b_n"]
            ax_l.errorbar(offs[order] / b_n, ratio[order], yerr=se[order], marker=".", lw=0.8, ms=3, capsize=0, label=f"n = {n}")
        ax_l.axhline(1.0, color="k", lw=0.8, ls="--")
        ax_l.set_xlabel(r"$(\theta-\theta_0)/b_n$")
        ax_l.set_ylabel("numerator / denominator")
        ax_l.legend(loc="best")

        summ = [s for s in report["summary"] if s.get("sup_ratio") is not None]
        if summ:
            ns = [s["n"] for s in summ]
            ax_r.errorbar(ns, [s["sup_ratio"] for s in summ], yerr=[s["sup_ratio_std_error"] for s in summ], marker="o", lw=1)
            ax_r.set_xscale("log")
        ax_r.axhline(1.0, color="k", lw=0.8, ls="--")
        ax_r.set_xlabel("n")
        ax_r.set_ylabel("sup over grid")
        fig.tight_layout()
        return _png(fig)


def coverage_figure(rows: list[dict]) -> bytes:
    """Empirical coverage by method against the nominal level ``1 - alpha``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        methods = sorted({r["method"] for r in rows})
        alphas = sorted({r["alpha"] for r in rows}, reverse=True)
        x = np.arange(len(alphas))
        width = 0.8 / max(len(methods), 1)
        for i, m in enumerate(methods):
            vals = [next((r for r in rows if r["alpha"] == a and r["method"] == m), None) for a in alphas]
            cov = [v["coverage"] if v and v.get("coverage") is not None else math.nan for v in vals]
            err = [3 * v["std_error"] if v and v.get("std_error") is not None else 0.0 for v in vals]
            ax.bar(x + (i - (len(methods) - 1) / 2) * width, cov, width, yerr=err, label=m.replace("_", " "))
        for j, a in enumerate(alphas):
            ax.hlines(1 - a, j - 0.45, j + 0.45, colors="k", linestyles="--", lw=0.8)
        ax.set_xticks(x, [f"{a:g}" for a in alphas])
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel("coverage (bars: 3 s.e.)")
        lo = min([1 - a for a in alphas] + [0.8])
        ax.set_ylim(lo - 0.05, 1.005)
        ax.legend(loc="lower left")
        fig.tight_layout()
        return _png(fig)
