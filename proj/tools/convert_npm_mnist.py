#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package to IDX.

The npm package stores 10,000 MNIST training digits grouped by class as
784-float arrays normalized to [0, 1] with three decimals. Multiplying by 255
and rounding recovers the original bytes exactly. Samples are interleaved with
a fixed-seed permutation so the output behaves like the standard training file
(no class runs).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/convert_npm_mnist.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"{digit}.json: length {len(flat)} not a multiple of 784")
        for off in range(0, len(flat), 784):
            pix = bytes(min(255, max(0, round(v * 255))) for v in flat[off:off + 784])
            samples.append((pix, digit))

    random.Random(args.seed).shuffle(samples)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with open(args.out_dir / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with open(args.out_dir / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {args.out_dir}")


if __name__ == "__main__":
    main()
