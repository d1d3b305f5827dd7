"""Report rendering: matplotlib figures written to files next to tidy CSVs.

Three report kinds mirror the evaluation surfaces of the library: SBC
calibration (log-gamma offsets and rank histograms), sampler diagnostics
(R-hat and ESS distributions), and latent-input recovery (posterior
intervals against ground truth, RMSE across trials).
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import atomic_write_text, fmt

__all__ = ["render_sbc_report", "render_diagnostics_report", "render_recovery_report"]

_FIG_KW = {"dpi": 150, "bbox_inches": "tight"}


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, **_FIG_KW)
    plt.close(fig)
    return path


def render_sbc_report(report: dict, outdir: str, stem: str = "sbc") -> list:
    """Figures + plot-ready CSV for an SBC report dictionary."""
    classes = report["classes"]
    names = list(classes)
    offsets = [classes[c]["log_offset"] for c in names]
    written = []

    fig, ax = plt.subplots(figsize=(7, 0.5 * len(names) + 1.5))
    colors = ["#b2182b" if classes[c]["reject"] else "#2166ac" for c in names]
    ax.barh(range(len(names)), offsets, color=colors)
    ax.axvline(0.0, color="k", lw=1, ls="--")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("log gamma - log threshold (negative rejects uniformity)")
    ax.set_title(f"SBC calibration, {report.get('variant', '')} "
                 f"(J={report.get('J')}, H={report.get('H')})")
    written.append(_save(fig, os.path.join(outdir, f"{stem}_log_gamma.png")))

    ranks = np.asarray(report["ranks"])
    param_names = report["param_names"]
    groups = report.get("class_members", {})
    h_draws = report["H"]
    ncols = min(3, max(1, len(names)))
    nrows = math.ceil(len(names) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 2.8 * nrows),
                             squeeze=False)
    for k, cls in enumerate(names):
        ax = axes[k // ncols][k % ncols]
        members = groups.get(cls, [])
        idx = [param_names.index(p) for p in members if p in param_names]
        pooled = ranks[:, idx].ravel() if idx else np.empty(0)
        if pooled.size:
            bins = min(20, h_draws + 1)
            ax.hist(pooled, bins=bins, range=(0, h_draws + 1), color="#4393c3")
            expect = pooled.size / bins
            ax.axhline(expect, color="k", ls="--", lw=1)
        ax.set_title(cls, fontsize=9)
    for k in range(len(names), nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.suptitle("SBC rank histograms (dashed: uniform expectation)")
    written.append(_save(fig, os.path.join(outdir, f"{stem}_ranks.png")))

    lines = ["class,gamma,threshold,log_offset,reject,count"]
    for c in names:
        r = classes[c]
        lines.append(f"{c},{fmt(r['gamma'])},{fmt(r['threshold'])},"
                     f"{fmt(r['log_offset'])},{int(r['reject'])},{r['count']}")
    csv_path = os.path.join(outdir, f"{stem}_log_gamma.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    written.append(csv_path)
    return written


def render_diagnostics_report(diag: dict, outdir: str, stem: str = "fit") -> list:
    """R-hat and ESS histograms from a fit diagnostics dictionary."""
    params = diag["params"]
    rhats = np.array([v["rhat"] for v in params.values() if v["rhat"] is not None])
    bulk = np.array([v["bulk_ess"] for v in params.values()
                     if v["bulk_ess"] is not None])
    tail = np.array([v["tail_ess"] for v in params.values()
                     if v["tail_ess"] is not None])
    written = []

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].hist(rhats, bins=30, color="#4393c3")
    axes[0].axvline(1.01, color="#b2182b", ls="--", lw=1)
    axes[0].set_title("split R-hat (dashed: 1.01)")
    for ax, vals, label in ((axes[1], bulk, "bulk ESS"), (axes[2], tail, "tail ESS")):
        if vals.size:
            ax.hist(np.log10(np.maximum(vals, 1.0)), bins=30, color="#4393c3")
            ax.axvline(2.0, color="#b2182b", ls="--", lw=1)
        ax.set_title(f"log10 {label} (dashed: 100)")
    fig.suptitle(f"Sampler diagnostics ({diag.get('model', '')}, "
                 f"divergences={diag.get('divergences')})")
    written.append(_save(fig, os.path.join(outdir, f"{stem}_diagnostics.png")))

    lines = ["parameter,rhat,bulk_ess,tail_ess"]
    for name, v in params.items():
        cells = [name] + ["" if v[k] is None else fmt(v[k])
                          for k in ("rhat", "bulk_ess", "tail_ess")]
        lines.append(",".join(cells))
    csv_path = os.path.join(outdir, f"{stem}_diagnostics.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    written.append(csv_path)
    return written


def render_recovery_report(x_true, x_tilde, draws_x, outdir: str,
                           stem: str = "recovery", s: float | None = None) -> list:
    """Posterior latent-input summaries against truth.

    ``draws_x`` is (S, N) posterior draws of the latent inputs.
    """
    draws_x = np.asarray(draws_x)
    x_true = np.asarray(x_true)
    mean = draws_x.mean(axis=0)
    lo, hi = np.quantile(draws_x, [0.05, 0.95], axis=0)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].errorbar(x_true, mean, yerr=[mean - lo, hi - mean], fmt="o",
                     ms=3, lw=0.8, color="#2166ac", label="posterior 90%")
    if x_tilde is not None:
        axes[0].plot(x_true, x_tilde, "x", ms=4, color="#b2182b", label="measured")
    lim = [min(x_true.min(), mean.min()), max(x_true.max(), mean.max())]
    axes[0].plot(lim, lim, "k--", lw=1)
    axes[0].set_xlabel("true input")
    axes[0].set_ylabel("estimate")
    axes[0].legend(fontsize=8)
    err = np.sqrt(np.mean((draws_x - x_true[None, :]) ** 2, axis=0))
    axes[1].plot(x_true, err, "o", ms=3, color="#2166ac")
    if s is not None:
        axes[1].axhline(s, color="#b2182b", ls="--", lw=1, label=f"measurement SD {s:g}")
        axes[1].legend(fontsize=8)
    axes[1].set_xlabel("true input")
    axes[1].set_ylabel("per-coordinate RMSE")
    fig.suptitle("Latent input recovery")
    written.append(_save(fig, os.path.join(outdir, f"{stem}.png")))

    lines = ["x_true,x_tilde,post_mean,q05,q95,rmse"]
    xt = x_tilde if x_tilde is not None else [float("nan")] * x_true.size
    for vals in zip(x_true, xt, mean, lo, hi, err):
        lines.append(",".join(fmt(v) for v in vals))
    csv_path = os.path.join(outdir, f"{stem}.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    written.append(csv_path)
    return written
