"""Validation accuracy against the number of time-encoding channels C."""

import argparse
import logging

from target_har.classifier.network import NetworkSpec
from target_har.classifier.training import TrainConfig, train
from target_har.pipeline import featurize
from target_har.pose_evolution import EncodingConfig
from target_har.synthetic import ActionDatasetConfig, generate_action_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--channels", type=int, nargs="+", default=[2, 3, 4, 5])
    ap.add_argument("--train-per-class", type=int, default=100)
    ap.add_argument("--val-per-class", type=int, default=40)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--filters", type=int, nargs=2, default=(32, 64))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    tr = generate_action_dataset(ActionDatasetConfig(args.train_per_class, seed=args.seed))
    va = generate_action_dataset(ActionDatasetConfig(args.val_per_class, seed=args.seed + 1))
    print("channels,val_accuracy")
    for c in args.channels:
        enc = EncodingConfig(channels=c, scale=1 / 32)
        x, v = featurize(tr.clips, enc), featurize(va.clips, enc)
        spec = NetworkSpec(x.shape[1], x.shape[2], x.shape[3], tuple(args.filters))
        _, hist = train(x, tr.labels, v, va.labels, spec, TrainConfig(epochs=args.epochs, seed=args.seed))
        print(f"{c},{max(h.val_accuracy for h in hist):.4f}")


if __name__ == "__main__":
    main()
