#!/usr/bin/env python3
"""Build a 28x28 handwritten-digit IDX dataset from scikit-learn's digits.

The bundled digits are real 8x8 handwritten scans (values 0..16). This
script resamples them to the requested count, upscales 3x to 24x24, pads to
28x28, applies a small seeded translation jitter, and writes standard IDX
image/label files. Deterministic for a given seed, so the smoke experiment
downstream is reproducible.

Usage: python scripts/make_digits_idx.py --out data/ --count 5000 --seed 0
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from otvq.data import write_idx_images, write_idx_labels  # noqa: E402


def build(count: int, seed: int):
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = raw.images  # (1797, 8, 8), float 0..16
    labels = raw.target
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, images.shape[0], size=count)
    out = np.zeros((count, 28, 28), dtype=np.uint8)
    shifts = rng.integers(-2, 3, size=(count, 2))
    for i, (j, (dy, dx)) in enumerate(zip(picks, shifts)):
        big = np.kron(images[j], np.ones((3, 3)))          # 24x24
        canvas = np.pad(big, 2)                            # 28x28
        canvas = np.roll(np.roll(canvas, dy, axis=0), dx, axis=1)
        out[i] = np.clip(canvas * 15.9375, 0, 255).astype(np.uint8)
    return out, labels[picks].astype(np.uint8)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--count", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    images, labels = build(args.count, args.seed)
    img_path = os.path.join(args.out, "digits-images.idx")
    lab_path = os.path.join(args.out, "digits-labels.idx")
    write_idx_images(images, img_path)
    write_idx_labels(labels, lab_path)
    print(f"wrote {img_path} ({images.shape[0]} images) and {lab_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
