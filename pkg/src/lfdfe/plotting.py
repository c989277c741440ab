"""Figure rendering for campaign results (files only, no interactive backends)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

MARKERS = "osd^v<>px*"


def _style(ax):
    ax.grid(True, which="both", alpha=0.3)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)


def plot_ber(results, path, title=None):
    """Semilog BER-vs-SNR curves, one per CampaignResult.

    Points with no observed errors are left out since they have no place
    on a log axis.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for i, res in enumerate(results):
        pts = [p for p in res.points if p.ber]
        if not pts:
            continue
        label = res.scheme + (" (genie)" if res.genie else "")
        ax.semilogy([p.snr_db for p in pts], [p.ber for p in pts],
                    marker=MARKERS[i % len(MARKERS)], linestyle="--" if res.genie else "-",
                    label=label)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("BER")
    if title:
        ax.set_title(title)
    _style(ax)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_mi(results, path, title=None):
    """Average mutual information (bits per channel use) against SNR."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for i, res in enumerate(results):
        ax.plot([p.snr_db for p in res.points], [p.mean_mutual_info_bits for p in res.points],
                marker=MARKERS[i % len(MARKERS)], label=res.scheme)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("mutual information [bits/channel use]")
    if title:
        ax.set_title(title)
    _style(ax)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_packing_history(history, path):
    """Best minimum distance against candidate evaluations of a packing run."""
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    ax.plot(range(1, len(history) + 1), history)
    ax.set_xlabel("candidate evaluations")
    ax.set_ylabel("minimum pairwise distance")
    _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
