"""Multi-task uncertainty-weighted loss with a passivity regularizer.

Each task k in {RL, IL, NEXT, FEXT} contributes MSE_k / (2 sigma_k^2) +
log sigma_k with a learnable log sigma_k, so noisy tasks are automatically
down-weighted. The passivity term penalizes predicted scattering rows
whose linear power sum exceeds unity.
"""

from __future__ import annotations

import torch
from torch import nn

from tsvgnn.graph import TASKS


def passivity_penalty(node_db, pair_db, pairs, n_signals):
    """mean over signal rows of relu(sum_j |S_ij|^2 - 1), from dB inputs."""
    if n_signals == 0:
        ref = node_db if node_db is not None else pair_db
        return ref.new_zeros(()) if ref is not None else torch.zeros(())
    lin_node = 10.0 ** (node_db / 10.0)          # power of RL and IL entries
    rows = lin_node.sum(dim=1)
    if pairs.shape[0]:
        lin_pair = 10.0 ** (pair_db / 10.0)
        contrib = lin_pair.sum(dim=1)            # NEXT + FEXT power per pair
        rows = rows.index_add(0, pairs[:, 0], contrib)
        rows = rows.index_add(0, pairs[:, 1], contrib)
    return torch.relu(rows - 1.0).mean()


class SurrogateLoss(nn.Module):
    def __init__(self, passivity_weight=1.0):
        super().__init__()
        if passivity_weight < 0.0:
            raise ValueError("passivity_weight must be >= 0")
        self.passivity_weight = passivity_weight
        self.log_sigma = nn.Parameter(torch.zeros(len(TASKS)))

    def forward(self, node_pred, pair_pred, sample):
        """Returns (total, components) for one labeled sample."""
        mse = {}
        zero = node_pred.new_zeros(())
        for col, task in enumerate(("rl", "il")):
            if node_pred.shape[0]:
                mse[task] = ((node_pred[:, col] - sample.node_db[:, col]) ** 2).mean()
            else:
                mse[task] = zero
        for col, task in enumerate(("next", "fext")):
            if pair_pred.shape[0]:
                mse[task] = ((pair_pred[:, col] - sample.pair_db[:, col]) ** 2).mean()
            else:
                mse[task] = zero
        total = zero
        for k, task in enumerate(TASKS):
            s = self.log_sigma[k]
            total = total + mse[task] * torch.exp(-2.0 * s) / 2.0 + s
        pen = passivity_penalty(
            node_pred, pair_pred, sample.pairs, sample.n_signals
        )
        total = total + self.passivity_weight * pen
        if not torch.isfinite(total):
            raise FloatingPointError(
                "non-finite loss: "
                + ", ".join(f"{t}={float(v):.3e}" for t, v in mse.items())
                + f", passivity={float(pen):.3e}"
            )
        return total, {**{t: float(v.detach()) for t, v in mse.items()},
                       "passivity": float(pen.detach())}
