"""SVG charts for sweeps and training curves (conveniences; the CSVs are the contract)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SVG_META = {"Date": None}


def _save(fig, path) -> None:
    with plt.rc_context({"svg.hashsalt": "drspcrl", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def sweep_chart(rows: list[dict], path) -> dict:
    """Mean return against level with a 95% CI band, one line per perturbation kind.

    Returns the y-limits and the number of bands drawn, for checking.
    """
    kinds = list(dict.fromkeys(r["perturbation_kind"] for r in rows))
    fig, ax = plt.subplots(figsize=(6, 4))
    bands = 0
    for kind in kinds:
        sub = sorted((r for r in rows if r["perturbation_kind"] == kind), key=lambda r: r["level"])
        x = [r["level"] for r in sub]
        ax.plot(x, [r["mean_return"] for r in sub], marker="o", label=kind)
        ax.fill_between(x, [r["ci95_low"] for r in sub], [r["ci95_high"] for r in sub], alpha=0.25)
        bands += 1
    lo = min(r["ci95_low"] for r in rows)
    hi = max(r["ci95_high"] for r in rows)
    pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.05
    ax.set_ylim(lo - pad, hi + pad)
    ax.set_xlabel("perturbation level")
    ax.set_ylabel("mean episode return")
    ax.legend()
    ax.grid(alpha=0.3)
    ylim = tuple(ax.get_ylim())
    fig.tight_layout()
    _save(fig, path)
    return {"ylim": ylim, "bands": bands}


def training_chart(rows: list[dict], path) -> None:
    """Return, robust value estimate, epsilon and beta against iteration."""
    it = [r["iteration"] for r in rows]
    panels = (("mean_episode_return", "episode return"), ("robust_value_estimate", "robust value"),
              ("epsilon", "epsilon"), ("beta_estimate", "beta estimate"))
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, (col, label) in zip(axes.ravel(), panels):
        ys = [r[col] for r in rows]
        pts = [(x, y) for x, y in zip(it, ys) if not math.isnan(y)]
        if pts:
            ax.plot(*zip(*pts), lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("iteration")
    fig.tight_layout()
    _save(fig, path)
