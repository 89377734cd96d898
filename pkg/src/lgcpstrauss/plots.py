"""Figure rendering for the CLI report paths.

Every function writes a PNG next to the delimited artifacts and returns
the path.  Figures are presentation sugar only; nothing downstream reads
them back.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import PARAM_NAMES

DPI = 150


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_pattern(pattern, path, field=None, title=None) -> Path:
    w = pattern.window
    fig, ax = plt.subplots(figsize=(5, 5 * w.height / w.width))
    if field is not None:
        ax.imshow(
            field.values.T,
            origin="lower",
            extent=(w.xmin, w.xmax, w.ymin, w.ymax),
            cmap="gray",
            alpha=0.8,
        )
    ax.scatter(pattern.points[:, 0], pattern.points[:, 1], s=8, c="white" if field is not None else "black",
               edgecolors="black", linewidths=0.3)
    ax.set_xlim(w.xmin, w.xmax)
    ax.set_ylim(w.ymin, w.ymax)
    ax.set_aspect("equal")
    ax.set_title(title or f"n = {pattern.n}")
    return _save(fig, path)


def plot_curves(curves: dict[str, object], path, ylabel="") -> Path:
    fig, axes = plt.subplots(1, len(curves), figsize=(4.2 * len(curves), 3.4), squeeze=False)
    for ax, (name, c) in zip(axes[0], curves.items()):
        ok = c.defined
        ax.plot(c.r[ok], c.values[ok], "k-")
        ax.set_xlabel("r")
        ax.set_title(name)
    axes[0][0].set_ylabel(ylabel)
    return _save(fig, path)


def plot_trace(traces: dict[str, list], path) -> Path:
    fig, (ax_n, ax_s) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    colors = {"empty": "black", "poisson": "0.6"}
    for label, records in traces.items():
        it = [r.iteration for r in records]
        ax_n.plot(it, [r.n for r in records], color=colors.get(label, None), lw=0.7, label=label)
        ax_s.plot(it, [r.s_r for r in records], color=colors.get(label, None), lw=0.7)
    ax_n.set_ylabel("n")
    ax_s.set_ylabel("R-close pairs")
    ax_s.set_xlabel("iteration")
    ax_n.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_posteriors(posterior, prior, path, kdes: dict[str, object] | None = None) -> Path:
    fig, axes = plt.subplots(1, 5, figsize=(17, 3))
    for ax, name in zip(axes, PARAM_NAMES):
        samples = posterior.column(name)
        kde = (kdes or {}).get(name)
        if kde is not None:
            ax.plot(kde.x, kde.density, "k-", label="posterior")
        else:
            ax.hist(samples, bins=30, density=True, color="0.3")
        m = prior.marginal(name)
        lo = max(m.lo, samples.min() - 3 * samples.std()) if np.isfinite(m.lo) else samples.min()
        hi = min(m.hi, samples.max() + 3 * samples.std()) if np.isfinite(m.hi) else samples.max()
        grid = np.linspace(lo, hi, 200)
        ax.plot(grid, m.pdf(grid), color="0.6", label="prior")
        ax.set_title(name)
    axes[0].legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_envelope(result, path, title="", ylabel="") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ok = result.mask
    ax.fill_between(result.r[ok], result.lo[ok], result.hi[ok], color="0.8", label=f"{result.level:.0%} envelope")
    ax.plot(result.r[ok], result.sim_mean[ok], "k--", lw=0.9, label="predictive mean")
    ax.plot(result.r[ok], result.data[ok], "k-", lw=1.4, label="data")
    ax.set_xlabel("r")
    ax.set_ylabel(ylabel)
    ax.set_title(f"{title} (p = {result.p_value:.3g})")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_votes(choice, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3))
    names = list(choice.vote_fractions)
    fracs = [choice.vote_fractions[n] for n in names]
    ax.bar(names, fracs, color=["0.2" if n == choice.selected else "0.7" for n in names])
    ax.set_ylabel("vote fraction")
    ax.set_title(f"selected: {choice.selected} (prob ~ {choice.posterior_probability:.2f})")
    return _save(fig, path)
