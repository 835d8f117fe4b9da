"""Inference on dataset-schema records plus RFE reporting.

Predictions are written back in the dataset label schema (magnitudes as
[value, 0.0] complex pairs) so they can feed any consumer of the
analytical labels. The model predicts dB magnitudes only; phase is not
modeled.
"""

from __future__ import annotations

import json

import torch

from tsvgnn.graph import build_graph


def rfe(pred_db, truth_db):
    """Relative Frobenius error between linear magnitudes of two dB vectors."""
    p = 10.0 ** (torch.as_tensor(pred_db, dtype=torch.float64) / 20.0)
    t = 10.0 ** (torch.as_tensor(truth_db, dtype=torch.float64) / 20.0)
    denom = float(torch.linalg.norm(t))
    return float(torch.linalg.norm(p - t)) / max(denom, 1e-30)


def _all_pairs(ns):
    return torch.tensor(
        [[v, a] for v in range(ns) for a in range(v + 1, ns)],
        dtype=torch.long,
    ).reshape(-1, 2)


def predict_record(model, record):
    """Predict one record; returns (labels dict, report dict)."""
    sample = build_graph(record, dtype=next(model.parameters()).dtype)
    has_labels = sample.node_db is not None
    if not has_labels:
        sample.pairs = _all_pairs(sample.n_signals)
    model.eval()
    with torch.no_grad():
        node_db, pair_db = model(sample)

    def mag(db):
        return [10.0 ** (float(db) / 20.0), 0.0]

    ns = sample.n_signals
    labels = {
        "s11": [mag(node_db[v, 0]) for v in range(ns)],
        "s21": [mag(node_db[v, 1]) for v in range(ns)],
        "next": [
            [int(sample.pairs[p, 0]), int(sample.pairs[p, 1]), mag(pair_db[p, 0])]
            for p in range(sample.pairs.shape[0])
        ],
        "fext": [
            [int(sample.pairs[p, 0]), int(sample.pairs[p, 1]), mag(pair_db[p, 1])]
            for p in range(sample.pairs.shape[0])
        ],
    }
    report = {
        "n_signals": ns,
        "n_nodes": sample.n_nodes,
        "extrapolation": not _within_trained_scale(model, sample),
    }
    if has_labels:
        pred = torch.cat([node_db.reshape(-1), pair_db.reshape(-1)])
        truth = torch.cat(
            [sample.node_db.reshape(-1), sample.pair_db.reshape(-1)]
        )
        report["rfe_vs_analytical"] = rfe(pred, truth)
    return labels, report


def _within_trained_scale(model, sample):
    """Flags node features outside +/- 5 sigma of the training statistics."""
    z = model.scaler.scale(sample.x)
    return bool((z.abs() <= 5.0).all())


def predict_file(model, in_path, out_path):
    """Predict every record of a JSON-lines file; returns the reports."""
    reports = []
    with open(in_path) as src, open(out_path, "w") as dst:
        for line in src:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            labels, report = predict_record(model, record)
            out = {
                "layout": record["layout"],
                "geometry": record["geometry"],
                "frequency_hz": record["frequency_hz"],
                "labels": labels,
            }
            dst.write(json.dumps(out, sort_keys=True) + "\n")
            reports.append(report)
    return reports


def summarize_reports(reports):
    vals = [r["rfe_vs_analytical"] for r in reports if "rfe_vs_analytical" in r]
    out = {"count": len(reports)}
    if vals:
        out["mean_rfe"] = sum(vals) / len(vals)
        out["max_rfe"] = max(vals)
    out["extrapolated"] = sum(1 for r in reports if r["extrapolation"])
    return out
