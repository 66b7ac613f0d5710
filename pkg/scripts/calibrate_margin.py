#!/usr/bin/env python3
"""Recompute the triplet margin the way the default (0.08) was derived:
average the squared luminance-span distances of sampled pairs under a
trained model."""

import argparse

from relight import data, losses, training


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--data", required=True, help="dataset root (low/ + high/)")
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--train-count", type=int, default=data.DEFAULT_TRAIN_COUNT)
    args = ap.parse_args()

    params = training.load_params(args.ckpt)
    split = data.load_lol(args.data, train_count=args.train_count)
    chosen = split.train[: args.pairs]
    margin = losses.calibrate_margin([(p.low, p.ref) for p in chosen], params)
    print(f"pairs sampled:            {len(chosen)}")
    print(f"mean luminance distance:  {margin:.6f}")
    print(f"shipped default margin:   {losses.LossConfig().alpha_margin}")


if __name__ == "__main__":
    main()
