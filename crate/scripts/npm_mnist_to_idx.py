#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package to IDX.

The package carries 10,000 MNIST digits (about 1,000 per class) as pixel
intensities in [0, 1].  The first 90% of every class goes to the
train files and the last 10% to the test files, so the split needs no RNG.

usage: npm_mnist_to_idx.py <package/src/digits> <out_dir>
"""
import json
import os
import struct
import sys


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // 784
        n_test = n // 10
        for k in range(n):
            px = [min(255, max(0, round(v * 255))) for v in raw[k * 784:(k + 1) * 784]]
            name = "t10k" if k >= n - n_test else "train"
            splits[name][0].append(px)
            splits[name][1].append(digit)
    for name, (images, labels) in splits.items():
        flat = [p for img in images for p in img]
        write_idx(os.path.join(out, f"{name}-images-idx3-ubyte"), 0x803, (len(images), 28, 28), flat)
        write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte"), 0x801, (len(labels),), labels)
        print(name, len(images))


if __name__ == "__main__":
    main()
