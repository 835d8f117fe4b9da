"""Combinatorial and geometric design-space search with Pareto extraction.

Exhaustive lexicographic enumeration of signal placements, D4 symmetry
reduction to canonical orbit representatives (with a Burnside cycle-index
oracle for orbit counting), objective evaluation through the analytical
solver, non-dominated front extraction, and checkpointed search drivers.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from tsvnet.core import (
    D4,
    FrequencyGrid,
    GeometryError,
    GeometryMaterials,
    TsvLayout,
    apply_d4,
    build_layout,
    canonical_form,
)
from tsvnet.em import crosstalk_report, db, solve_sweep
from tsvnet.thermal import array_etc

SWEEP_RANGES = {
    "r_cond": (2.0, 6.0),
    "p_int": (20.0, 60.0),
    "h_int": (60.0, 100.0),
    "t_ins": (0.5, 3.0),
}

CHECKPOINT_VERSION = 1
CHECKPOINT_INTERVAL = 10_000


class SearchError(RuntimeError):
    pass


class CheckpointCorrupt(SearchError):
    """Checkpoint checksum mismatch."""


@dataclass(frozen=True)
class ObjectiveVector:
    """Electrical and thermal objectives of one design."""

    max_reflection_db: float
    mean_insertion_db: float
    worst_crosstalk_db: float
    k_z: float

    def __post_init__(self):
        for name in ("max_reflection_db", "mean_insertion_db", "worst_crosstalk_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.k_z <= 0:
            raise ValueError("k_z must be > 0")

    def minimization_key(self):
        """All-minimize tuple: attenuation as |mean dB|, k_z negated."""
        return (
            self.max_reflection_db,
            abs(self.mean_insertion_db),
            self.worst_crosstalk_db,
            -self.k_z,
        )

    def to_dict(self):
        return {
            "max_reflection_db": self.max_reflection_db,
            "mean_insertion_db": self.mean_insertion_db,
            "worst_crosstalk_db": self.worst_crosstalk_db,
            "k_z_w_per_mk": self.k_z,
        }


@dataclass(frozen=True)
class ParetoRecord:
    layout: TsvLayout
    geometry: dict
    objectives: ObjectiveVector
    dominated: bool = False

    def to_dict(self):
        return {
            "layout": self.layout.to_dict(),
            "geometry": self.geometry,
            "objectives": self.objectives.to_dict(),
            "dominated": self.dominated,
        }


@dataclass(frozen=True)
class SearchConfig:
    rows: int = 3
    cols: int = 3
    s_min: int = 2
    s_max: int = 3
    frequency: float = 15e9
    symmetry: bool = True
    geometry_ranges: dict = field(default_factory=lambda: dict(SWEEP_RANGES))
    samples: int = 4096
    seed: int = 42
    sampler: str = "lhs"  # "lhs" | "grid"
    workers: int = 1
    checkpoint_path: str = ""
    checkpoint_interval: int = CHECKPOINT_INTERVAL

    def __post_init__(self):
        if not 0 < self.s_min <= self.s_max:
            raise SearchError("invalid signal-count range")
        if self.s_max >= self.rows * self.cols:
            raise SearchError("signal count must leave at least one ground cell")


def enumerate_layouts(rows, cols, n_signal):
    """All C(rows*cols, n_signal) layouts in lexicographic order.

    Non-signal cells are ground (fully populated grid).
    """
    n = rows * cols
    if not 0 < n_signal < n:
        raise SearchError(f"n_signal must be in (0, {n}) to keep a ground cell")
    cells = range(n)
    for combo in itertools.combinations(cells, n_signal):
        signal = set(combo)
        roles = tuple(1 if i in signal else -1 for i in cells)
        yield TsvLayout(rows=rows, cols=cols, roles=roles)


def count_layouts(rows, cols, n_signal):
    """Stream count of the enumeration (count-only mode, no evaluation)."""
    n = rows * cols
    if not 0 < n_signal < n:
        raise SearchError(f"n_signal must be in (0, {n}) to keep a ground cell")
    return sum(1 for _ in itertools.combinations(range(n), n_signal))


def symmetry_reduce(stream):
    """Yield only layouts equal to their canonical form (orbit representatives)."""
    for layout in stream:
        if layout.roles == canonical_form(layout).roles:
            yield layout


def orbit_size(layout):
    """Size of the D4 orbit (8 / |stabilizer|) of a square layout."""
    return len({apply_d4(layout, t).roles for t in D4})


def _cycle_lengths(perm):
    seen = [False] * len(perm)
    out = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        i = start
        while not seen[i]:
            seen[i] = True
            i = perm[i]
            length += 1
        out.append(length)
    return out


def burnside_orbit_count(n, k):
    """Orbits of k-subsets of the n x n grid under D4, via the cycle index."""
    from tsvnet.core import cell_destination_map

    total = 0
    for t in D4:
        perm = cell_destination_map(t, n, n)
        # invariant k-subsets are unions of whole cycles: coeff of x^k
        poly = np.zeros(k + 1, dtype=object)
        poly[0] = 1
        for length in _cycle_lengths(perm):
            if length <= k:
                nxt = poly.copy()
                nxt[length:] = nxt[length:] + poly[: k + 1 - length]
                poly = nxt
        total += int(poly[k])
    assert total % 8 == 0
    return total // 8


def reduced_count(rows, cols, n_signal):
    """Number of canonical orbit representatives, computed vectorized.

    Enumerates all signal-subset bitmasks and counts those equal to the
    minimum over their 8 D4 images; matches `symmetry_reduce` exactly.
    """
    if rows != cols:
        raise SearchError("symmetry reduction requires a square grid")
    from tsvnet.core import cell_destination_map

    n = rows * cols
    total = math.comb(n, n_signal)
    masks = np.empty(total, dtype=np.int64)
    for i, combo in enumerate(itertools.combinations(range(n), n_signal)):
        m = 0
        for c in combo:
            m |= 1 << c
        masks[i] = m
    best = masks.copy()
    for t in D4:
        if t is D4.IDENTITY:
            continue
        dest = cell_destination_map(t, rows, cols)
        permuted = np.zeros_like(masks)
        for b in range(n):
            permuted |= ((masks >> b) & 1) << dest[b]
        np.minimum(best, permuted, out=best)
    return int(np.count_nonzero(best == masks))


def evaluate_design(layout, g, config):
    """ObjectiveVector at the evaluation frequency; deterministic."""
    grid = FrequencyGrid((config.frequency,))
    block = solve_sweep(layout, g, grid, workers=config.workers)
    s = block.at(config.frequency)
    ns = block.n_signals
    refl = max(db(s[block.top_port(v), block.top_port(v)]) for v in range(ns))
    ins = float(
        np.mean([db(s[block.bottom_port(v), block.top_port(v)]) for v in range(ns)])
    )
    if ns >= 2:
        report = crosstalk_report(block, config.frequency)
        worst = float(db(report.victim_totals.max()))
    else:
        worst = -math.inf
    tb = array_etc(layout, g)
    if ns < 2:
        # single-signal layouts have no crosstalk; use a large sentinel in dB
        worst = -300.0
    return ObjectiveVector(
        max_reflection_db=float(refl),
        mean_insertion_db=ins,
        worst_crosstalk_db=worst,
        k_z=tb.k_z_eq,
    )


def dominates(a, b):
    """Strict Pareto dominance on the minimization keys."""
    ka, kb = a.minimization_key(), b.minimization_key()
    return all(x <= y for x, y in zip(ka, kb)) and any(x < y for x, y in zip(ka, kb))


def pareto_front(records):
    """Non-dominated subset; order- and duplication-invariant."""
    records = list(records)
    if not records:
        raise SearchError("pareto front of an empty record set")
    front = []
    for i, r in enumerate(records):
        dominated = any(
            dominates(other.objectives, r.objectives)
            for j, other in enumerate(records)
            if j != i
        )
        if not dominated and not any(
            f.objectives.minimization_key() == r.objectives.minimization_key()
            for f in front
        ):
            front.append(replace(r, dominated=False))
    return front


def _checksum(payload):
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()


def _write_checkpoint(path, state):
    payload = {"version": CHECKPOINT_VERSION, "state": state}
    payload["checksum"] = _checksum(state)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, path)


def _read_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointCorrupt("checkpoint version mismatch")
    if _checksum(payload["state"]) != payload.get("checksum"):
        raise CheckpointCorrupt("checkpoint checksum mismatch")
    return payload["state"]


def _layout_stream(config):
    if config.symmetry and config.rows != config.cols:
        raise SearchError("symmetry reduction requires a square grid")
    for n_signal in range(config.s_min, config.s_max + 1):
        stream = enumerate_layouts(config.rows, config.cols, n_signal)
        if config.symmetry:
            stream = symmetry_reduce(stream)
        yield from stream


@dataclass
class SearchResult:
    records: list
    front: list
    errors: list
    evaluated: int


def combinatorial_search(config, g=None, resume=False, progress=None):
    """Enumerate, evaluate, rank by worst crosstalk, extract the front.

    Checkpoints every `checkpoint_interval` designs when a path is set;
    `resume=True` continues from a valid checkpoint. Results are keyed by
    enumeration index so reruns are bit-identical.
    """
    if g is None:
        g = GeometryMaterials()
    done = {}
    errors = []
    start_index = 0
    if resume and config.checkpoint_path and os.path.exists(config.checkpoint_path):
        state = _read_checkpoint(config.checkpoint_path)
        start_index = state["next_index"]
        errors = [tuple(e) for e in state["errors"]]
        for k, v in state["results"].items():
            done[int(k)] = v

    index = -1
    for index, layout in enumerate(_layout_stream(config)):
        if index < start_index:
            continue
        try:
            obj = evaluate_design(layout, g, config)
            done[index] = {
                "roles": list(layout.roles),
                "objectives": obj.to_dict(),
            }
        except Exception as e:  # record the failure and keep enumerating
            errors.append((index, str(e)))
        if progress is not None and (index + 1) % 50 == 0:
            progress(index + 1)
        if (
            config.checkpoint_path
            and (index + 1) % config.checkpoint_interval == 0
        ):
            _write_checkpoint(
                config.checkpoint_path,
                {
                    "next_index": index + 1,
                    "results": {str(k): v for k, v in done.items()},
                    "errors": [list(e) for e in errors],
                    "config": {"rows": config.rows, "cols": config.cols,
                               "s_min": config.s_min, "s_max": config.s_max,
                               "symmetry": config.symmetry},
                },
            )

    if not done:
        raise SearchError("empty feasible set: no design evaluated")

    geometry = {k: getattr(g, k) for k in ("r_cond", "p_int", "h_int", "t_ins")}
    records = []
    for index in sorted(done):
        v = done[index]
        layout = TsvLayout(config.rows, config.cols, tuple(v["roles"]))
        obj = ObjectiveVector(
            max_reflection_db=v["objectives"]["max_reflection_db"],
            mean_insertion_db=v["objectives"]["mean_insertion_db"],
            worst_crosstalk_db=v["objectives"]["worst_crosstalk_db"],
            k_z=v["objectives"]["k_z_w_per_mk"],
        )
        records.append(ParetoRecord(layout=layout, geometry=geometry, objectives=obj))
    records.sort(key=lambda r: (r.objectives.worst_crosstalk_db, r.layout.roles))
    front = pareto_front(records)
    if config.checkpoint_path:
        _write_checkpoint(
            config.checkpoint_path,
            {
                "next_index": index + 1,
                "results": {
                    str(k): v for k, v in done.items()
                },
                "errors": [list(e) for e in errors],
                "config": {"rows": config.rows, "cols": config.cols,
                           "s_min": config.s_min, "s_max": config.s_max,
                           "symmetry": config.symmetry},
            },
        )
    return SearchResult(
        records=records, front=front, errors=errors, evaluated=len(done)
    )


def _sample_geometries(config, base):
    ranges = config.geometry_ranges
    names = ("r_cond", "p_int", "h_int", "t_ins")
    lows = [ranges[k][0] for k in names]
    highs = [ranges[k][1] for k in names]
    if all(lo == hi for lo, hi in zip(lows, highs)):
        return [dict(zip(names, lows))]
    if config.sampler == "grid":
        per_axis = max(2, round(config.samples ** 0.25))
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lows, highs)]
        return [
            dict(zip(names, vals)) for vals in itertools.product(*axes)
        ]
    sampler = qmc.LatinHypercube(d=4, seed=config.seed)
    unit = sampler.random(config.samples)
    scaled = qmc.scale(unit, lows, highs)
    return [dict(zip(names, row)) for row in scaled]


def geometric_sweep(layout, config, base=None, progress=None):
    """Sample (r, p, h, t_ox) over the sweep ranges and evaluate a fixed layout.

    Infeasible samples (liner overlap) are skipped and logged.
    """
    if base is None:
        base = GeometryMaterials()
    records = []
    skipped = []
    for i, geo in enumerate(_sample_geometries(config, base)):
        try:
            g = base.with_updates(
                r_cond=geo["r_cond"], p_int=geo["p_int"],
                h_int=geo["h_int"], t_ins=geo["t_ins"],
                l_s=0.0, w_s=0.0,
            )
        except GeometryError as e:
            skipped.append((i, str(e)))
            continue
        try:
            obj = evaluate_design(layout, g, config)
        except Exception as e:
            skipped.append((i, str(e)))
            continue
        records.append(
            ParetoRecord(layout=layout, geometry=dict(geo), objectives=obj)
        )
        if progress is not None and (i + 1) % 50 == 0:
            progress(i + 1)
    if not records:
        raise SearchError("no feasible geometry sample")
    front = pareto_front(records)
    return SearchResult(records=records, front=front, errors=skipped,
                        evaluated=len(records))


CSV_HEADER = (
    "r_cond_um,p_int_um,h_int_um,t_ins_um,"
    "mean_s21_db,max_s11_db,worst_xtalk_db,k_z_w_per_mk,layout_roles"
)


def records_to_csv(records):
    """CSV rows: geometry, objectives, layout roles."""
    lines = [CSV_HEADER]
    for r in records:
        o = r.objectives
        roles = "".join({1: "S", 0: "E", -1: "G"}[x] for x in r.layout.roles)
        lines.append(
            f"{r.geometry['r_cond']:.6g},{r.geometry['p_int']:.6g},"
            f"{r.geometry['h_int']:.6g},{r.geometry['t_ins']:.6g},"
            f"{o.mean_insertion_db:.6f},{o.max_reflection_db:.6f},"
            f"{o.worst_crosstalk_db:.6f},{o.k_z:.6f},{roles}"
        )
    return "\n".join(lines) + "\n"
