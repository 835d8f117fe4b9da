"""Matplotlib report figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from tsvnet.em import db


def sweep_figure(block, path):
    """|S11| / |S21| and worst coupling magnitude versus frequency."""
    f_ghz = np.asarray(block.frequencies.points) / 1e9
    ns = block.n_signals
    fig, ax = plt.subplots(figsize=(7, 4.5))
    s11 = np.array(
        [db(block.data[i, 0, 0]) for i in range(len(f_ghz))]
    )
    s21 = np.array(
        [db(block.data[i, block.bottom_port(0), block.top_port(0)])
         for i in range(len(f_ghz))]
    )
    ax.plot(f_ghz, s11, label="|S11| (port 1)")
    ax.plot(f_ghz, s21, label="|S21| (TSV 1 through)")
    if ns >= 2:
        worst = []
        for i in range(len(f_ghz)):
            s = block.data[i]
            mags = []
            for v in range(ns):
                for a in range(ns):
                    if a == v:
                        continue
                    mags.append(abs(s[block.top_port(v), block.top_port(a)]))
                    mags.append(abs(s[block.top_port(v), block.bottom_port(a)]))
            worst.append(20 * np.log10(max(mags)))
        ax.plot(f_ghz, worst, label="worst NEXT/FEXT", linestyle="--")
    ax.set_xlabel("Frequency (GHz)")
    ax.set_ylabel("Magnitude (dB)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def thermal_figure(field, path):
    """Mid-height temperature map plus vertical profile at the hot column."""
    temps = field.temps
    k_mid = temps.shape[2] // 2
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 4))
    im = ax0.imshow(
        temps[:, :, k_mid].T,
        origin="lower",
        extent=[field.x[0] * 1e6, field.x[-1] * 1e6,
                field.y[0] * 1e6, field.y[-1] * 1e6],
        aspect="auto",
        cmap="inferno",
    )
    ax0.set_xlabel("x (um)")
    ax0.set_ylabel("y (um)")
    ax0.set_title("T at mid-height (K)")
    fig.colorbar(im, ax=ax0)
    i_hot, j_hot, _ = np.unravel_index(np.argmax(temps), temps.shape)
    ax1.plot(field.z * 1e6, temps[i_hot, j_hot, :])
    ax1.set_xlabel("z (um)")
    ax1.set_ylabel("T (K)")
    ax1.set_title("Hot-column profile")
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pareto_figure(records, front, path):
    """Worst crosstalk vs vertical conductivity, front highlighted."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    xs = [r.objectives.worst_crosstalk_db for r in records]
    ys = [r.objectives.k_z for r in records]
    ax.scatter(xs, ys, s=12, alpha=0.4, label="evaluated")
    fx = [r.objectives.worst_crosstalk_db for r in front]
    fy = [r.objectives.k_z for r in front]
    ax.scatter(fx, fy, s=40, color="crimson", label="Pareto front")
    ax.set_xlabel("Worst total crosstalk (dB)")
    ax.set_ylabel("k_z (W/mK)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
