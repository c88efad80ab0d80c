"""Figure rendering for the report paths.

Non-interactive (Agg backend); every function writes a PNG next to the
delimited outputs.  Comparison figures draw pe-HMQC as a continuous line
and conventional HMQC dotted.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .process import Spectrum2D, Trace1D

# Fixed metadata keeps the PNG byte stream reproducible run to run.
_SAVEFIG = dict(dpi=120, metadata={"Software": "pehmqc"})


def save_projections(path, spec: Spectrum2D, title: str = "") -> None:
    """Skyline projections of the phased real part onto both axes."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(spec.f1_axis, spec.real.max(axis=1), lw=0.9, color="black")
    ax1.set_xlabel("F1 (Hz)")
    ax1.set_ylabel("intensity")
    ax1.set_title("F1 projection")
    ax2.plot(spec.f2_axis, spec.real.max(axis=0), lw=0.9, color="black")
    ax2.set_xlabel("F2 (Hz)")
    ax2.set_title("F2 projection")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def save_sections(path, traces: list[tuple[str, Trace1D]], title: str = "",
                  annotations: list[str] | None = None) -> None:
    """Overlay of 1D cross sections (one panel per trace label group)."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    styles = [
        dict(color="black", ls="-", lw=1.1),
        dict(color="black", ls=":", lw=1.1),
        dict(color="gray", ls="--", lw=0.9),
    ]
    for k, (label, tr) in enumerate(traces):
        ax.plot(tr.axis_hz, tr.values, label=label, **styles[k % len(styles)])
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("intensity")
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title)
    if annotations:
        ax.text(0.02, 0.95, "\n".join(annotations), transform=ax.transAxes,
                va="top", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def save_comparison(path, f1_traces: dict[str, Trace1D],
                    f2_traces: dict[str, Trace1D],
                    annotations: list[str] | None = None) -> None:
    """Side-by-side F1/F2 cross-section comparison of pe vs conventional."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    for ax, traces, name in ((ax1, f1_traces, "F1"), (ax2, f2_traces, "F2")):
        for label, tr in traces.items():
            style = dict(color="black", ls="-", lw=1.1) if "pe" in label \
                else dict(color="black", ls=":", lw=1.1)
            ax.plot(tr.axis_hz, tr.values, label=label, **style)
        ax.set_xlabel(f"{name} (Hz)")
        ax.set_title(f"{name} cross sections")
        ax.legend(frameon=False, fontsize=8)
    ax1.set_ylabel("intensity")
    if annotations:
        ax1.text(0.02, 0.95, "\n".join(annotations), transform=ax1.transAxes,
                 va="top", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
