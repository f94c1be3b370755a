"""Render matplotlib figures next to the delimited outputs of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import SpectralReport
from .harness import RefinementTable


def _semilogy(ax, x, y, label):
    y = np.asarray(y, dtype=float)
    mask = y > 0.0
    if mask.any():
        ax.semilogy(np.asarray(x)[mask], y[mask], label=label)


def run_figures(outdir: str | Path) -> list[Path]:
    """Energy/dissipation and drift/residual histories from diagnostics.csv."""
    outdir = Path(outdir)
    data = np.genfromtxt(outdir / "diagnostics.csv", delimiter=",", names=True)
    data = np.atleast_1d(data)
    t = data["t"]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    _semilogy(ax1, t, data["e_total"], "total energy")
    _semilogy(ax1, t, data["e_kin"], "kinetic")
    _semilogy(ax1, t, data["e_pot"], "elastic")
    _semilogy(ax1, t, data["dissipation"], "dissipation")
    ax1.set_xlabel("t")
    ax1.set_title("energy decay")
    ax1.legend(fontsize=8)

    _semilogy(ax2, t, np.abs(data["residual"]), "|energy-identity residual|")
    _semilogy(ax2, t, np.abs(data["drift"]), "constraint drift")
    ax2.set_xlabel("t")
    ax2.set_title("structural diagnostics")
    ax2.legend(fontsize=8)

    fig.tight_layout()
    path = outdir / "energy_history.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def refinement_figure(table: RefinementTable, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    hs = np.array([row["h"] for row in table.levels])
    fig, ax = plt.subplots(figsize=(5, 4))
    for metric, order in sorted(table.orders.items()):
        vals = np.array([row[metric] for row in table.levels])
        if np.all(vals > 0):
            ax.loglog(hs, vals, "o-", label=f"{metric} (order {order:.2f})")
    ax.set_xlabel("h")
    ax.set_ylabel("metric")
    ax.set_title("refinement study")
    ax.legend(fontsize=7)
    ax.invert_xaxis()
    fig.tight_layout()
    path = outdir / "refinement_orders.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def spectrum_figure(report: SpectralReport, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vals = np.array(report.eigenvalues)
    ax.plot(np.arange(len(vals)), vals, "o")
    ax.axhline(report.tolerances.get("kernel", 0.0), color="gray", lw=0.8, ls="--",
               label="kernel tolerance")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_title(f"smallest eigenvalues (kernel dim {report.kernel_dim}, gap {report.gap:.4g})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / "spectrum.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def steady_figure(outdir: str | Path) -> Path:
    outdir = Path(outdir)
    data = np.genfromtxt(outdir / "steady_history.csv", delimiter=",", names=True)
    data = np.atleast_1d(data)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    _semilogy(ax, data["iteration"], data["residual"], "steady-state residual")
    ax.set_xlabel("iteration")
    ax.set_title("steady director flow")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / "steady_residual.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
