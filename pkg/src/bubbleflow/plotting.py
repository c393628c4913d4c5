"""SVG figures for flow diagnostics.  Output is byte-stable for fixed input."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

STYLE = {
    "svg.hashsalt": "bubbleflow",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.figsize": (5.0, 3.4),
}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def _window(rate):
    win = rate.get("fitWindow") if rate else None
    return tuple(win) if win else None


def decay_figure(diag: dict, rate: dict | None, path):
    """log I and ||grad rho||^2 against s, with the fitted lines over the window."""
    s, I, rho = diag["s"], diag["I"], diag["rhoH1"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ok = I > 0
        ax.semilogy(s[ok], I[ok], ".", ms=3, label="I")
        ax.semilogy(s, rho**2, ".", ms=3, label=r"$\|\nabla\rho\|^2$")
        win = _window(rate)
        if win and rate.get("kappaFit") is not None:
            sel = (s >= win[0]) & (s <= win[1]) & ok
            if np.count_nonzero(sel) >= 2:
                coef = np.polyfit(s[sel], np.log(I[sel]), 1)
                ax.semilogy(s[sel], np.exp(np.polyval(coef, s[sel])), "k-",
                            label=f"fit, rate {rate['kappaFit']:.4g}")
            ax.axvspan(win[0], win[1], color="0.9", zorder=0)
        ax.set_xlabel("s")
        ax.legend(frameon=False)
        _save(fig, path)


def ratio_figure(diag: dict, rate: dict | None, path):
    s, I, rho = diag["s"], diag["I"], diag["rhoH1"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ok = rho > 0
        ax.plot(s[ok], I[ok] / rho[ok] ** 2, ".", ms=3)
        ax.axhspan(0.1, 10.0, color="0.92", zorder=0)
        win = _window(rate)
        if win:
            ax.axvline(win[0], color="k", lw=0.6)
            ax.axvline(win[1], color="k", lw=0.6)
        ax.set_yscale("log")
        ax.set_xlabel("s")
        ax.set_ylabel(r"$I / \|\nabla\rho\|^2$")
        _save(fig, path)


def energy_figure(diag: dict, path):
    s = diag["s"]
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.6))
        a1.plot(s, diag["J"])
        a1.set_ylabel("J")
        a2.semilogy(s, np.maximum(diag["delta"], 1e-300))
        a2.set_ylabel(r"$\delta$")
        a2.set_xlabel("s")
        _save(fig, path)


def render_figures(diag: dict, rate: dict | None, directory) -> list[Path]:
    directory = Path(directory)
    out = [directory / "energy.svg", directory / "decay.svg", directory / "ratio.svg"]
    energy_figure(diag, out[0])
    decay_figure(diag, rate, out[1])
    ratio_figure(diag, rate, out[2])
    return out
