#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

Usage: npm_mnist_to_idx.py <path/to/package/src/digits> <out_dir> [--test-every N]

Every N-th sample of each class (default 5) goes to the test split, the rest
to the train split. Samples are interleaved by class in a fixed order so the
output is byte-for-byte reproducible.
"""
import argparse
import json
import os
import struct


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
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test-every", type=int, default=5)
    args = ap.parse_args()

    per_class = []
    for d in range(10):
        with open(os.path.join(args.digits_dir, f"{d}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // 784
        imgs = [
            [min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784]]
            for i in range(n)
        ]
        per_class.append(imgs)

    splits = {"train": ([], []), "t10k": ([], [])}
    longest = max(len(c) for c in per_class)
    for i in range(longest):
        for d in range(10):
            if i < len(per_class[d]):
                key = "t10k" if i % args.test_every == args.test_every - 1 else "train"
                splits[key][0].append(per_class[d][i])
                splits[key][1].append(d)

    os.makedirs(args.out_dir, exist_ok=True)
    for key, (imgs, labels) in splits.items():
        write_images(os.path.join(args.out_dir, f"{key}-images-idx3-ubyte"), imgs)
        write_labels(os.path.join(args.out_dir, f"{key}-labels-idx1-ubyte"), labels)
        print(key, len(imgs))


if __name__ == "__main__":
    main()
