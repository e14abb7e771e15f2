#!/usr/bin/env python3
"""Build a desk-scale MNIST sample in IDX format.

The canonical MNIST download hosts are often unreachable from build sandboxes,
so this script sources the 10k-digit sample bundled with the `mnist` npm
package (MIT, pixels stored as floats in [0,1]) and re-encodes it as the usual
pair of big-endian IDX files, gzip-compressed:

    train-images-idx3-ubyte.gz   magic 0x00000803, n x 28 x 28 uint8
    train-labels-idx1-ubyte.gz   magic 0x00000801, n uint8

Digits are interleaved with a fixed shuffle so that taking the first K samples
(the CLI's --subset) yields a class-balanced prefix, like the canonical files.

If you have the canonical files, point FEDREWIND_MNIST_DIR at them instead;
the loader reads both plain and gzipped IDX.
"""

import argparse
import gzip
import io
import json
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path


def load_npm_digits(tgz: Path):
    samples = []
    with tarfile.open(tgz) as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            flat = json.load(tar.extractfile(member))["data"]
            if len(flat) % 784:
                raise ValueError(f"digit {digit}: payload not a multiple of 784")
            for k in range(len(flat) // 784):
                pixels = bytes(round(v * 255) for v in flat[k * 784:(k + 1) * 784])
                samples.append((pixels, digit))
    return samples


def write_idx(out_dir: Path, samples):
    images = io.BytesIO()
    images.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
    for pixels, _ in samples:
        images.write(pixels)
    labels = io.BytesIO()
    labels.write(struct.pack(">II", 0x00000801, len(samples)))
    labels.write(bytes(label for _, label in samples))
    out_dir.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archives byte-reproducible
    for name, buf in (("train-images-idx3-ubyte.gz", images), ("train-labels-idx1-ubyte.gz", labels)):
        with open(out_dir / name, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            gz.write(buf.getvalue())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mnist"))
    ap.add_argument("--tarball", help="pre-downloaded mnist-<ver>.tgz from npm")
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tgz = Path(args.tarball) if args.tarball else None
        if tgz is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True)
            tgz = next(Path(tmp).glob("mnist-*.tgz"))
        samples = load_npm_digits(tgz)

    random.Random(args.seed).shuffle(samples)
    write_idx(Path(args.out), samples)
    print(f"wrote {len(samples)} samples to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
