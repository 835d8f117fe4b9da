"""Command-line entry point: train, finetune, and predict subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from tsvgnn.model import ModelConfig
from tsvgnn.predict import predict_file, summarize_reports
from tsvgnn.train import (
    FINETUNE_LR,
    PRETRAIN_LR,
    TrainError,
    finetune,
    load_checkpoint,
    load_dataset,
    train,
)

EXIT_VALIDATION = 2
EXIT_TRAINING = 3


def build_parser():
    p = argparse.ArgumentParser(
        prog="tsvgnn",
        description="Graph-attention surrogate for TSV-array scattering metrics",
    )
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="pretrain on an analytical dataset")
    t.add_argument("--train", required=True, help="JSON-lines training set")
    t.add_argument("--val", help="JSON-lines validation set")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=PRETRAIN_LR)
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--layers", type=int, default=3)
    t.add_argument("--passivity-weight", type=float, default=1.0)
    t.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("finetune", help="continue training at the reduced rate")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--train", required=True)
    f.add_argument("--val")
    f.add_argument("--out", required=True)
    f.add_argument("--epochs", type=int, default=20)
    f.add_argument("--lr", type=float, default=FINETUNE_LR)

    pr = sub.add_parser("predict", help="predict labels for dataset records")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--input", required=True, help="JSON-lines records")
    pr.add_argument("--out", required=True, help="predictions JSON-lines path")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION
    try:
        if args.command == "train":
            config = ModelConfig(
                hidden=args.hidden, heads=args.heads, layers=args.layers,
                passivity_weight=args.passivity_weight,
            )
            records = load_dataset(args.train)
            val = load_dataset(args.val) if args.val else None
            _, _, history = train(
                records, config=config, epochs=args.epochs, lr=args.lr,
                val_records=val, seed=args.seed, checkpoint_path=args.out,
            )
            print(json.dumps({
                "final_loss": history.train_loss[-1],
                "final_task_mse": history.task_mse[-1],
                "val_rfe": history.val_rfe,
            }))
        elif args.command == "finetune":
            records = load_dataset(args.train)
            val = load_dataset(args.val) if args.val else None
            _, _, history = finetune(
                args.checkpoint, records, epochs=args.epochs, lr=args.lr,
                val_records=val, out_path=args.out,
            )
            print(json.dumps({
                "final_loss": history.train_loss[-1],
                "val_rfe": history.val_rfe,
            }))
        elif args.command == "predict":
            model, _ = load_checkpoint(args.checkpoint)
            reports = predict_file(model, args.input, args.out)
            print(json.dumps(summarize_reports(reports)))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return 0


if __name__ == "__main__":
    sys.exit(main())
