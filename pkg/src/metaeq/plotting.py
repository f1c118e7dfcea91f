"""Figures for metrics and sweep CSVs. Renders straight to files, no display."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ber_vs_block(series: dict, path, title=None):
    """``series`` maps a label to a list of MetricRecord; plots cumulative mean BER."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, records in series.items():
            blocks = [r.block_index for r in records]
            cum = [max(r.cumulative_mean_ber, 1e-6) for r in records]
            ax.semilogy(blocks, cum, label=label)
        ax.set_xlabel("block index")
        ax.set_ylabel("cumulative mean coded BER")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_ber_vs_snr(rows, path, title=None):
    """One curve per (equalizer, training) from SweepRow records."""
    curves = {}
    for r in rows:
        curves.setdefault(f"{r.equalizer}/{r.training}", []).append((r.snr_db, r.mean_coded_ber))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, pts in sorted(curves.items()):
            pts.sort()
            x, y = zip(*pts)
            ax.semilogy(x, np.maximum(y, 1e-6), marker="o", label=label)
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("mean coded BER")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_taps(schedule, path, title=None):
    """Tap magnitudes over blocks, one line per delay."""
    taps = schedule.taps
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for lag in range(taps.shape[1]):
            ax.plot(np.arange(taps.shape[0]), taps[:, lag], label=f"h{lag}")
        ax.set_xlabel("block index")
        ax.set_ylabel("tap value")
        if title:
            ax.set_title(title)
        ax.legend(ncol=taps.shape[1])
        _save(fig, path)
