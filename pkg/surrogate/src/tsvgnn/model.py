"""Attention message-passing surrogate with FiLM frequency conditioning.

Geometry features are embedded per node; the excitation frequency acts as
a conditioning variable through a feature-wise linear modulation that is
initialized to the identity. Message passing is multi-head attention over
the fully connected graph with edge descriptors added to the scores. The
edge head is symmetrized so predicted pair quantities are reciprocal by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
from torch import nn


@dataclass
class ModelConfig:
    hidden: int = 64
    heads: int = 4
    layers: int = 3
    film_hidden: int = 32
    passivity_weight: float = 1.0
    tasks: tuple = ("rl", "il", "next", "fext")

    def __post_init__(self):
        if self.passivity_weight < 0.0:
            raise ValueError("passivity_weight must be >= 0")
        if self.hidden % self.heads:
            raise ValueError("hidden width must divide evenly across heads")
        self.tasks = tuple(self.tasks)
        if len(self.tasks) != 4:
            raise ValueError("exactly four prediction tasks are expected")

    def to_dict(self):
        return asdict(self)


class Film(nn.Module):
    """gamma(h_f) * h + beta(h_f), identity at initialization."""

    def __init__(self, cond_width, width):
        super().__init__()
        self.proj = nn.Linear(cond_width, 2 * width)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, h, h_cond):
        if h.shape[-1] * 2 != self.proj.out_features:
            raise ValueError("FiLM width mismatch")
        gamma_hat, beta = self.proj(h_cond).chunk(2, dim=-1)
        return (1.0 + gamma_hat) * h + beta


class AttentionLayer(nn.Module):
    """Dense multi-head attention over all node pairs, edge-feature biased."""

    def __init__(self, hidden, heads, edge_dim):
        super().__init__()
        self.heads = heads
        self.dk = hidden // heads
        self.q = nn.Linear(hidden, hidden)
        self.k = nn.Linear(hidden, hidden)
        self.v = nn.Linear(hidden, hidden)
        self.edge_bias = nn.Linear(edge_dim, heads)
        self.out = nn.Linear(hidden, hidden)
        self.norm1 = nn.LayerNorm(hidden)
        self.norm2 = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(
            nn.Linear(hidden, 2 * hidden), nn.GELU(),
            nn.Linear(2 * hidden, hidden),
        )

    def forward(self, h, edge_dense, pair_mask):
        n = h.shape[0]
        q = self.q(h).view(n, self.heads, self.dk)
        k = self.k(h).view(n, self.heads, self.dk)
        v = self.v(h).view(n, self.heads, self.dk)
        scores = torch.einsum("ihd,jhd->ijh", q, k) / self.dk**0.5
        scores = scores + self.edge_bias(edge_dense)
        scores = scores.masked_fill(~pair_mask.unsqueeze(-1), float("-inf"))
        att = torch.softmax(scores, dim=1)
        # a single-node graph has no neighbors; its message is zero
        att = torch.nan_to_num(att, nan=0.0)
        msg = torch.einsum("ijh,jhd->ihd", att, v).reshape(n, -1)
        h = self.norm1(h + self.out(msg))
        return self.norm2(h + self.ffn(h))


class SurrogateModel(nn.Module):
    """Predicts per-signal [RL, IL] and per-signal-pair [NEXT, FEXT] in dB."""

    def __init__(self, config, scaler):
        super().__init__()
        self.config = config
        self.scaler = scaler
        hidden = config.hidden
        self.node_enc = nn.Sequential(
            nn.Linear(5, hidden), nn.GELU(), nn.Linear(hidden, hidden),
        )
        self.freq_enc = nn.Sequential(
            nn.Linear(1, config.film_hidden), nn.GELU(),
            nn.Linear(config.film_hidden, config.film_hidden),
        )
        self.film = Film(config.film_hidden, hidden)
        self.mp = nn.ModuleList(
            AttentionLayer(hidden, config.heads, 3) for _ in range(config.layers)
        )
        self.node_head = nn.Sequential(
            nn.Linear(hidden, hidden), nn.GELU(), nn.Linear(hidden, 2),
        )
        self.edge_head = nn.Sequential(
            nn.Linear(2 * hidden, hidden), nn.GELU(), nn.Linear(hidden, 2),
        )

    def embed(self, sample):
        x = self.scaler.scale(sample.x)
        h = self.node_enc(x[:, :5])
        h_f = self.freq_enc(x[:, 5:6])
        h = self.film(h, h_f)
        n = sample.n_nodes
        edge_dense = x.new_zeros((n, n, 3))
        pair_mask = torch.zeros((n, n), dtype=torch.bool)
        if sample.edge_index.numel():
            src, dst = sample.edge_index
            edge_dense[dst, src] = self.scaler.scale_edges(sample.edge_attr)
            pair_mask[dst, src] = True
        for layer in self.mp:
            h = layer(h, edge_dense, pair_mask)
        return h

    def edge_predict(self, h_i, h_j):
        """Symmetrized pair prediction: identical under argument swap."""
        a = self.edge_head(torch.cat([h_i, h_j], dim=-1))
        b = self.edge_head(torch.cat([h_j, h_i], dim=-1))
        return 0.5 * (a + b)

    def forward(self, sample):
        h = self.embed(sample)
        hs = h[sample.signal_nodes]
        node_db = self.node_head(hs)
        if sample.pairs.shape[0]:
            pair_db = self.edge_predict(hs[sample.pairs[:, 0]],
                                        hs[sample.pairs[:, 1]])
        else:
            pair_db = h.new_zeros((0, 2))
        return node_db, pair_db
