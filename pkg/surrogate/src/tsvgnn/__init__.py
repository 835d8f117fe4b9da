"""Graph-attention surrogate for TSV-array scattering metrics.

Consumes the JSON-lines datasets written by the tsvnet ``dataset`` command
and learns per-signal return/insertion loss and per-pair NEXT/FEXT in dB.
"""

from tsvgnn.graph import FeatureScaler, GraphSample, build_graph
from tsvgnn.model import ModelConfig, SurrogateModel
from tsvgnn.loss import SurrogateLoss, passivity_penalty
from tsvgnn.train import (
    finetune,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    train,
)
from tsvgnn.predict import predict_record, rfe

__all__ = [
    "FeatureScaler",
    "GraphSample",
    "ModelConfig",
    "SurrogateLoss",
    "SurrogateModel",
    "build_graph",
    "finetune",
    "load_checkpoint",
    "load_dataset",
    "passivity_penalty",
    "predict_record",
    "rfe",
    "save_checkpoint",
    "train",
]
