"""JSON-lines dataset generation for the surrogate training pipeline.

One record per line: layout, geometry, frequency, and an analytically
solved label block (per-signal S11/S21, per-pair NEXT/FEXT, complex values
as [re, im]). Deterministic under a fixed seed.
"""

from __future__ import annotations

import json

import numpy as np

from tsvnet.core import FrequencyGrid, GeometryMaterials, TsvLayout
from tsvnet.em import solve_sweep
from tsvnet.optimizer import SWEEP_RANGES


def _random_layout(rng, rows, cols, allow_empty=True):
    n = rows * cols
    while True:
        roles = rng.choice(
            [1, 0, -1] if allow_empty else [1, -1],
            size=n,
            p=[0.4, 0.2, 0.4] if allow_empty else [0.5, 0.5],
        )
        layout = TsvLayout(rows=rows, cols=cols, roles=tuple(int(r) for r in roles))
        if layout.solvable:
            return layout


def generate_record(rng, size_range=(3, 5), freq_range=(1e9, 100e9),
                    geometry_ranges=None, base=None, allow_empty=True):
    """Sample one design, solve it at one frequency, emit the labeled record."""
    if geometry_ranges is None:
        geometry_ranges = SWEEP_RANGES
    if base is None:
        base = GeometryMaterials()
    rows = int(rng.integers(size_range[0], size_range[1] + 1))
    cols = rows
    while True:
        geo = {
            k: float(rng.uniform(lo, hi))
            for k, (lo, hi) in geometry_ranges.items()
        }
        try:
            g = base.with_updates(l_s=0.0, w_s=0.0, **geo)
            break
        except Exception:
            continue
    layout = _random_layout(rng, rows, cols, allow_empty=allow_empty)
    f = float(rng.uniform(*freq_range))
    block = solve_sweep(layout, g, FrequencyGrid((f,)))
    s = block.at(f)
    ns = block.n_signals

    def c2(z):
        return [float(z.real), float(z.imag)]

    labels = {
        "s11": [c2(s[block.top_port(v), block.top_port(v)]) for v in range(ns)],
        "s21": [c2(s[block.bottom_port(v), block.top_port(v)]) for v in range(ns)],
        "next": [
            [v, a, c2(s[block.top_port(v), block.top_port(a)])]
            for v in range(ns) for a in range(v + 1, ns)
        ],
        "fext": [
            [v, a, c2(s[block.top_port(v), block.bottom_port(a)])]
            for v in range(ns) for a in range(v + 1, ns)
        ],
    }
    return {
        "layout": layout.to_dict(),
        "geometry": geo,
        "frequency_hz": f,
        "signal_cells": list(block.signal_cells),
        "labels": labels,
    }


def generate_dataset(count, seed, out_path, split=None, **kw):
    """Write `count` records; optional split fraction writes .train/.val files.

    Returns the number of lines written per file as a dict.
    """
    rng = np.random.default_rng(seed)
    records = [generate_record(rng, **kw) for _ in range(count)]
    lines = [json.dumps(r, sort_keys=True) for r in records]
    written = {}
    if split is None:
        with open(out_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        written[str(out_path)] = len(lines)
    else:
        n_train = int(round(count * split))
        train_path = str(out_path) + ".train"
        val_path = str(out_path) + ".val"
        with open(train_path, "w") as fh:
            if lines[:n_train]:
                fh.write("\n".join(lines[:n_train]) + "\n")
        with open(val_path, "w") as fh:
            if lines[n_train:]:
                fh.write("\n".join(lines[n_train:]) + "\n")
        written[train_path] = n_train
        written[val_path] = count - n_train
    return written
