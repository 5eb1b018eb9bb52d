#!/usr/bin/env python3
"""Build the desk-scale MNIST subset as gzipped IDX files.

The 10k digits are taken from the `mnist` npm package (MIT), which ships
MNIST digits as JSON arrays of 784 pixel values in [0, 1] quantized to
multiples of 1/255. Each class is split 80/20 into train/test, then each
partition is shuffled with a fixed seed.

Usage: fetch_mnist_subset.py [--package DIR] [--out DIR]
"""
import argparse
import gzip
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def load_digits(package_dir):
    per_class = []
    for digit in range(10):
        data = json.loads((package_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        pixels = [round(v * 255) for v in data]
        per_class.append([pixels[i:i + 784] for i in range(0, len(pixels), 784)])
    return per_class


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--package", type=pathlib.Path, help="unpacked npm package dir")
    parser.add_argument("--out", type=pathlib.Path,
                        default=pathlib.Path(__file__).resolve().parent.parent / "data" / "mnist")
    parser.add_argument("--train-fraction", type=float, default=0.8)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package_dir = args.package
        if package_dir is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
                tar.extractall(tmp)
            package_dir = pathlib.Path(tmp) / "package"
        per_class = load_digits(package_dir)

    train, test = [], []
    for digit, images in enumerate(per_class):
        cut = int(round(len(images) * args.train_fraction))
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    rng = random.Random(0)
    rng.shuffle(train)
    rng.shuffle(test)

    args.out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        images = [p for img, _ in part for p in img]
        labels = [lbl for _, lbl in part]
        write_idx(args.out / f"{name}-images-idx3-ubyte.gz", 0x00000803, [len(part), 28, 28], images)
        write_idx(args.out / f"{name}-labels-idx1-ubyte.gz", 0x00000801, [len(part)], labels)
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
