#!/usr/bin/env python3
"""Convert the digit subset shipped in the `mnist` npm package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) bundles 10,000 MNIST
digits as per-class JSON arrays of intensities normalised to [0, 1] with three
decimals, which rounds back to the original 0..255 bytes exactly. The digits
are shuffled with a fixed seed and split into a training file and a test file
using the canonical MNIST IDX names, so the simulator can consume them like the
original distribution.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/npm_mnist_to_idx.py package data/
"""
import json
import random
import struct
import sys
from pathlib import Path

SEED = 20170605
TEST_COUNT = 1000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    if len(sys.argv) != 3:
        sys.exit("usage: npm_mnist_to_idx.py <npm package dir> <output dir>")
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    samples = []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(0, len(data), 784):
            pixels = [int(round(v * 255.0)) for v in data[i : i + 784]]
            samples.append((pixels, digit))

    random.Random(SEED).shuffle(samples)
    test, train = samples[:TEST_COUNT], samples[TEST_COUNT:]

    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} training and {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
