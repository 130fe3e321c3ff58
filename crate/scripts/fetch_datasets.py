#!/usr/bin/env python3
"""Materialize MNIST and Fashion-MNIST as IDX files from package-mirror copies.

The official download hosts are often unreachable from CI sandboxes, so this
script pulls two packages that redistribute the raw pixels and rewrites them in
the standard IDX layout:

  * MNIST: the 5,000-sample CSV bundled in the `mlxtend` wheel (PyPI).
  * Fashion-MNIST: the per-class JSON files in the `fashion-mnist` npm package.

Output layout (consumed by `quanvbench --dataset-dir DIR`):

  DIR/mnist/train-images-idx3-ubyte
  DIR/mnist/train-labels-idx1-ubyte
  DIR/fmnist/train-images-idx3-ubyte
  DIR/fmnist/train-labels-idx1-ubyte

If you already have the official IDX files, drop them into the same layout
(optionally gzip-compressed with a .gz suffix) and skip this script.
"""

import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile
import zipfile


def write_idx(out_dir: pathlib.Path, images, labels):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out_dir / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} samples to {out_dir}", file=sys.stderr)


def fetch_mnist(work: pathlib.Path, out: pathlib.Path):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(work), "mlxtend==0.24.0"],
        check=True,
    )
    wheel = next(work.glob("mlxtend-*.whl"))
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    images, labels = [], []
    for line in gzip.decompress(raw).decode().splitlines():
        fields = [int(float(v)) for v in line.split(",")]
        images.append(fields[:784])
        labels.append(fields[784])
    write_idx(out / "mnist", images, labels)


def fetch_fmnist(work: pathlib.Path, out: pathlib.Path, per_class: int):
    subprocess.run(["npm", "pack", "fashion-mnist@1.1.0"], cwd=work, check=True)
    tgz = next(work.glob("fashion-mnist-*.tgz"))
    images, labels = [], []
    with tarfile.open(tgz) as tar:
        for cls in range(10):
            member = tar.extractfile(f"package/src/clothes/{cls}.json")
            rows = json.load(member)["data"][:per_class]
            for row in rows:
                images.append([int(v) for v in row])
                labels.append(cls)
    write_idx(out / "fmnist", images, labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data", help="output directory (default: data)")
    ap.add_argument("--fmnist-per-class", type=int, default=1000)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    with tempfile.TemporaryDirectory() as tmp:
        work = pathlib.Path(tmp)
        fetch_mnist(work, out)
        fetch_fmnist(work, out, args.fmnist_per_class)


if __name__ == "__main__":
    main()
