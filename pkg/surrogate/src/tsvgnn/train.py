"""Two-stage training: pretrain on analytical labels, finetune at 1e-4.

Datasets are the JSON-lines files written by the tsvnet ``dataset``
command. Checkpoints embed the model configuration and the feature
scaling constants so inference needs nothing else.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import torch

from tsvgnn.graph import TASKS, FeatureScaler, build_graph
from tsvgnn.loss import SurrogateLoss
from tsvgnn.model import ModelConfig, SurrogateModel

log = logging.getLogger("tsvgnn")

PRETRAIN_LR = 1e-3
FINETUNE_LR = 1e-4


class TrainError(RuntimeError):
    pass


def load_dataset(path):
    """Parse a JSON-lines dataset file into record dicts."""
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    task_mse: list = field(default_factory=list)
    val_rfe: list = field(default_factory=list)


def task_mse(model, samples):
    """Plain per-task MSE over a sample list, in dB^2 units."""
    sums = {t: 0.0 for t in TASKS}
    counts = {t: 0 for t in TASKS}
    with torch.no_grad():
        for s in samples:
            node_pred, pair_pred = model(s)
            if node_pred.shape[0]:
                err = (node_pred - s.node_db) ** 2
                for col, t in enumerate(("rl", "il")):
                    sums[t] += float(err[:, col].sum())
                    counts[t] += err.shape[0]
            if pair_pred.shape[0]:
                err = (pair_pred - s.pair_db) ** 2
                for col, t in enumerate(("next", "fext")):
                    sums[t] += float(err[:, col].sum())
                    counts[t] += err.shape[0]
    return {t: sums[t] / counts[t] for t in TASKS if counts[t]}


def _validation_rfe(model, samples):
    """Mean relative Frobenius error over linear label magnitudes."""
    total = 0.0
    with torch.no_grad():
        for s in samples:
            node_pred, pair_pred = model(s)
            pred = torch.cat([node_pred.reshape(-1), pair_pred.reshape(-1)])
            truth = torch.cat([s.node_db.reshape(-1), s.pair_db.reshape(-1)])
            pred_lin = 10.0 ** (pred / 20.0)
            truth_lin = 10.0 ** (truth / 20.0)
            denom = torch.linalg.norm(truth_lin).clamp_min(1e-30)
            total += float(torch.linalg.norm(pred_lin - truth_lin) / denom)
    return total / len(samples)


def _run_epochs(model, criterion, samples, val_samples, epochs, lr, history):
    opt = torch.optim.Adam(
        list(model.parameters()) + list(criterion.parameters()), lr=lr
    )
    for epoch in range(epochs):
        model.train()
        epoch_loss = 0.0
        for s in samples:
            opt.zero_grad()
            node_pred, pair_pred = model(s)
            loss, _ = criterion(node_pred, pair_pred, s)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
        model.eval()
        mse = task_mse(model, samples)
        history.train_loss.append(epoch_loss / len(samples))
        history.task_mse.append(mse)
        msg = (f"epoch {epoch + 1}/{epochs} loss {history.train_loss[-1]:.4g} "
               + " ".join(f"{t}={v:.4g}" for t, v in mse.items()))
        if val_samples:
            rfe = _validation_rfe(model, val_samples)
            if not torch.isfinite(torch.tensor(rfe)):
                raise TrainError(f"non-finite validation RFE at epoch {epoch}")
            history.val_rfe.append(rfe)
            msg += f" val_rfe={rfe:.4g}"
        log.info(msg)
    return history


def _to_samples(records, dtype):
    samples = [build_graph(r, dtype=dtype) for r in records]
    if any(s.node_db is None for s in samples):
        raise TrainError("training records must carry label blocks")
    return samples


def train(records, config=None, epochs=50, lr=PRETRAIN_LR, val_records=None,
          seed=0, checkpoint_path=None, dtype=torch.float64):
    """Pretrain from scratch; returns (model, criterion, history)."""
    if not records:
        raise TrainError("empty training dataset")
    if config is None:
        config = ModelConfig()
    torch.manual_seed(seed)
    samples = _to_samples(records, dtype)
    scaler = FeatureScaler().fit(samples)
    model = SurrogateModel(config, scaler).to(dtype)
    criterion = SurrogateLoss(config.passivity_weight).to(dtype)
    val = _to_samples(val_records, dtype) if val_records else []
    history = _run_epochs(model, criterion, samples, val, epochs, lr, History())
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, criterion)
    return model, criterion, history


def finetune(checkpoint_path, records, epochs=20, lr=FINETUNE_LR,
             val_records=None, out_path=None, dtype=torch.float64):
    """Continue training a saved model at the reduced rate."""
    if not records:
        raise TrainError("empty finetuning dataset")
    model, criterion = load_checkpoint(checkpoint_path, dtype=dtype)
    samples = _to_samples(records, dtype)
    val = _to_samples(val_records, dtype) if val_records else []
    history = _run_epochs(model, criterion, samples, val, epochs, lr, History())
    if out_path:
        save_checkpoint(out_path, model, criterion)
    return model, criterion, history


def save_checkpoint(path, model, criterion):
    torch.save({
        "config": model.config.to_dict(),
        "scaler": model.scaler.state_dict(),
        "model": model.state_dict(),
        "loss": criterion.state_dict(),
    }, path)


def load_checkpoint(path, dtype=torch.float64):
    state = torch.load(path, weights_only=False)
    config = ModelConfig(**state["config"])
    scaler = FeatureScaler().load_state_dict(state["scaler"])
    model = SurrogateModel(config, scaler).to(dtype)
    try:
        model.load_state_dict(state["model"])
    except RuntimeError as exc:
        raise TrainError(f"checkpoint/architecture mismatch: {exc}") from exc
    criterion = SurrogateLoss(config.passivity_weight).to(dtype)
    criterion.load_state_dict(state["loss"])
    model.eval()
    return model, criterion
