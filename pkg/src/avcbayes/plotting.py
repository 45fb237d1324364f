"""PNG figures written next to the CSV outputs.  Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_monthly(totals, path):
    """Observed against posterior expected collisions per month, with the band."""
    months = [m.month for m in totals]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(months, [m.lower for m in totals], [m.upper for m in totals], alpha=0.25, label="95% band")
    ax.plot(months, [m.expected for m in totals], marker="o", label="posterior expected")
    ax.plot(months, [m.observed for m in totals], marker="s", linestyle="--", label="observed")
    ax.set_xlabel("month")
    ax.set_ylabel("collisions")
    ax.set_xticks(months)
    ax.legend()
    return _save(fig, path)


def plot_traces(store, names, path):
    fig, axes = plt.subplots(len(names), 1, figsize=(8, 1.8 * len(names)), sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        for chain in store.chains:
            sel = store.chain == chain
            ax.plot(store.iteration[sel], store.column(name)[sel], lw=0.5, label=f"chain {chain}")
        ax.set_ylabel(name, fontsize=8)
    axes[-1, 0].set_xlabel("iteration")
    axes[0, 0].legend(fontsize=7, ncol=4)
    return _save(fig, path)


def plot_hotspots(hotspots, path):
    labels = [f"{h.segment_id} m{h.month}" for h in hotspots][::-1]
    values = [h.expected for h in hotspots][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(labels) + 1.2))
    ax.barh(labels, values)
    ax.set_xlabel("posterior expected collisions")
    return _save(fig, path)


def plot_scenario(result, path):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.hist(np.ravel(result.delta_p), bins=50)
    a1.set_xlabel("change in collision probability")
    a2.hist(np.ravel(result.delta_expected), bins=50)
    a2.set_xlabel("change in expected collisions")
    for ax in (a1, a2):
        ax.set_ylabel("cells")
    return _save(fig, path)
