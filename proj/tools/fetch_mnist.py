#!/usr/bin/env python3
"""Fetch MNIST digits and write them as IDX files.

The digits come from the `mnist` npm package (10,000 real MNIST samples,
1,000 per class, pixels stored as fractions in [0, 1]). They are shuffled with
a fixed seed and split into train (8,000) and test (2,000) sets:

    <out>/train-images-idx3-ubyte   <out>/train-labels-idx1-ubyte
    <out>/t10k-images-idx3-ubyte    <out>/t10k-labels-idx1-ubyte

Usage: tools/fetch_mnist.py [--out data/mnist] [--package path/to/mnist.tgz]
"""

import argparse
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile

TEST_COUNT = 2000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--package", help="existing mnist-*.tgz instead of `npm pack mnist`")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tgz = args.package
        if tgz is None:
            name = subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True,
                                  capture_output=True, text=True).stdout.strip().splitlines()[-1]
            tgz = pathlib.Path(tmp) / name
        samples = []
        with tarfile.open(tgz) as tar:
            for digit in range(10):
                data = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
                assert len(data) % 784 == 0
                for i in range(0, len(data), 784):
                    pixels = [min(255, max(0, round(v * 255))) for v in data[i:i + 784]]
                    samples.append((pixels, digit))

    random.Random(20240101).shuffle(samples)
    test, train = samples[:TEST_COUNT], samples[TEST_COUNT:]
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
