#!/usr/bin/env python3
"""Write a 10000-image MNIST subset as IDX files.

The images come from the `mnist` npm package (v1.1.0, MIT), which bundles
10000 MNIST digits as per-class JSON arrays of pixel/255 values. The digits
are shuffled with a fixed seed and every fifth one goes to the test split,
giving 8000 training and 2000 test images.

    python3 tools/make_mnist_subset.py --package mnist-1.1.0.tgz --out data/mnist10k

Without --package the script runs `npm pack mnist@1.1.0` into a temp dir first.
"""
import argparse
import glob
import json
import os
import struct
import subprocess
import tarfile
import tempfile

import numpy as np


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package")
    ap.add_argument("--out", default="data/mnist10k")
    ap.add_argument("--seed", type=int, default=20221)
    args = ap.parse_args()

    package = args.package
    if package is None:
        tmp = tempfile.mkdtemp()
        subprocess.check_call(["npm", "pack", "mnist@1.1.0"], cwd=tmp)
        package = glob.glob(os.path.join(tmp, "mnist-*.tgz"))[0]

    images, labels = [], []
    with tarfile.open(package) as tar:
        for digit in range(10):
            values = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
            block = np.asarray(values, dtype=np.float64).reshape(-1, 784)
            images.append(np.rint(block * 255.0))
            labels.append(np.full(len(block), digit, dtype=np.int64))
    pixels = np.concatenate(images)
    labels = np.concatenate(labels)
    assert pixels.shape == (10000, 784)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    pixels, labels = pixels[order], labels[order]
    test = np.arange(len(labels)) % 5 == 4
    os.makedirs(args.out, exist_ok=True)
    write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte"), pixels[~test])
    write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), labels[~test])
    write_idx_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), pixels[test])
    write_idx_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), labels[test])
    print(f"train {int((~test).sum())}, test {int(test.sum())} -> {args.out}")


if __name__ == "__main__":
    main()
