"""Graph construction from tsvnet dataset records.

One node per grid cell in layout cell order; the graph is fully connected
(both directions, no self edges) with distance-based edge descriptors.
Labels are dB magnitudes of the analytically solved scattering entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch


class SchemaError(ValueError):
    pass


NODE_FEATURES = ("type", "r_via", "p", "h_via", "t_ox", "f")
TASKS = ("rl", "il", "next", "fext")

# dB floor for zero-magnitude entries
DB_FLOOR = -300.0


def _mag_db(re_im):
    mag = math.hypot(float(re_im[0]), float(re_im[1]))
    if mag <= 10.0 ** (DB_FLOOR / 20.0):
        return DB_FLOOR
    return 20.0 * math.log10(mag)


@dataclass
class GraphSample:
    """One design as a fully connected attributed graph."""

    x: torch.Tensor            # (V, 6) raw node features, NODE_FEATURES order
    edge_index: torch.Tensor   # (2, E) directed, E = V(V-1)
    edge_attr: torch.Tensor    # (E, 3) [d, 1/d, 1/d^2], d in micrometers
    signal_nodes: torch.Tensor  # (ns,) node indices of signal cells
    rows: int
    cols: int
    node_db: torch.Tensor | None = None   # (ns, 2) [rl, il] in dB
    pairs: torch.Tensor = field(
        default_factory=lambda: torch.zeros((0, 2), dtype=torch.long)
    )                                      # (P, 2) indices into signal order
    pair_db: torch.Tensor | None = None   # (P, 2) [next, fext] in dB

    @property
    def n_nodes(self):
        return self.x.shape[0]

    @property
    def n_signals(self):
        return int(self.signal_nodes.shape[0])


def build_graph(record, dtype=torch.float64):
    """Build a GraphSample from one dataset record (parsed JSON object)."""
    try:
        lay = record["layout"]
        rows, cols = int(lay["rows"]), int(lay["cols"])
        roles = [int(r) for r in lay["roles"]]
        geo = record["geometry"]
        r_via = float(geo["r_cond"])
        pitch = float(geo["p_int"])
        h_via = float(geo["h_int"])
        t_ox = float(geo["t_ins"])
        f = float(record["frequency_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed dataset record: {exc}") from exc
    n = rows * cols
    if len(roles) != n:
        raise SchemaError(f"roles length {len(roles)} != {rows}x{cols}")
    if any(r not in (1, 0, -1) for r in roles):
        raise SchemaError("roles must be in {1, 0, -1}")

    feats = np.empty((n, 6))
    feats[:, 0] = roles
    feats[:, 1] = r_via
    feats[:, 2] = pitch
    feats[:, 3] = h_via
    feats[:, 4] = t_ox
    feats[:, 5] = f

    rr, cc = np.divmod(np.arange(n), cols)
    dx = (cc[:, None] - cc[None, :]) * pitch
    dy = (rr[:, None] - rr[None, :]) * pitch
    dist = np.hypot(dx, dy)
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    d = dist[src, dst]
    edge_attr = np.stack([d, 1.0 / d, 1.0 / d**2], axis=1)

    signal_nodes = [i for i, r in enumerate(roles) if r == 1]
    sample = GraphSample(
        x=torch.as_tensor(feats, dtype=dtype),
        edge_index=torch.as_tensor(np.stack([src, dst]), dtype=torch.long),
        edge_attr=torch.as_tensor(edge_attr, dtype=dtype),
        signal_nodes=torch.as_tensor(signal_nodes, dtype=torch.long),
        rows=rows,
        cols=cols,
    )

    labels = record.get("labels")
    if labels is not None:
        ns = len(signal_nodes)
        try:
            if len(labels["s11"]) != ns or len(labels["s21"]) != ns:
                raise SchemaError(
                    f"label count {len(labels['s11'])} != {ns} signals"
                )
            node_db = [
                [_mag_db(labels["s11"][v]), _mag_db(labels["s21"][v])]
                for v in range(ns)
            ]
            pair_list, pair_db = [], []
            fext = {(int(v), int(a)): z for v, a, z in labels["fext"]}
            for v, a, z in labels["next"]:
                v, a = int(v), int(a)
                pair_list.append([v, a])
                pair_db.append([_mag_db(z), _mag_db(fext[(v, a)])])
        except (KeyError, TypeError, IndexError) as exc:
            raise SchemaError(f"malformed label block: {exc}") from exc
        sample.node_db = torch.as_tensor(
            np.array(node_db).reshape(ns, 2), dtype=dtype
        )
        sample.pairs = torch.as_tensor(
            np.array(pair_list, dtype=np.int64).reshape(len(pair_list), 2)
        )
        sample.pair_db = torch.as_tensor(
            np.array(pair_db).reshape(len(pair_db), 2), dtype=dtype
        )
    return sample


class FeatureScaler:
    """Per-channel standardization of node and edge features.

    Frequency and the reciprocal-distance channels span decades, so they
    are standardized in log10; constants are stored with the checkpoint.
    """

    LOG_NODE = (5,)       # frequency
    LOG_EDGE = (0, 1, 2)  # all distance channels are positive

    def __init__(self):
        self.node_mean = None
        self.node_std = None
        self.edge_mean = None
        self.edge_std = None

    def _node_space(self, x):
        out = x.clone()
        for c in self.LOG_NODE:
            out[:, c] = torch.log10(out[:, c])
        return out

    def _node_unspace(self, x):
        out = x.clone()
        for c in self.LOG_NODE:
            out[:, c] = 10.0 ** out[:, c]
        return out

    def _edge_space(self, e):
        return torch.log10(e) if e.numel() else e

    def fit(self, samples):
        xs = torch.cat([self._node_space(s.x) for s in samples])
        es = torch.cat(
            [self._edge_space(s.edge_attr) for s in samples if s.edge_attr.numel()]
        ) if any(s.edge_attr.numel() for s in samples) else torch.zeros((1, 3))
        self.node_mean = xs.mean(dim=0)
        self.node_std = xs.std(dim=0).clamp_min(1e-12)
        self.edge_mean = es.mean(dim=0)
        self.edge_std = es.std(dim=0).clamp_min(1e-12)
        return self

    def scale(self, x):
        return (self._node_space(x) - self.node_mean) / self.node_std

    def unscale(self, x):
        return self._node_unspace(x * self.node_std + self.node_mean)

    def scale_edges(self, e):
        if not e.numel():
            return e
        return (self._edge_space(e) - self.edge_mean) / self.edge_std

    def state_dict(self):
        return {
            "node_mean": self.node_mean,
            "node_std": self.node_std,
            "edge_mean": self.edge_mean,
            "edge_std": self.edge_std,
        }

    def load_state_dict(self, state):
        self.node_mean = state["node_mean"]
        self.node_std = state["node_std"]
        self.edge_mean = state["edge_mean"]
        self.edge_std = state["edge_std"]
        return self
