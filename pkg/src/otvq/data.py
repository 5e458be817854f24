"""Datasets: seeded synthetic mixtures, the IDX binary loader, batching.

Everything here is a pure function of its arguments; the same seed always
yields the same bytes. Datasets are read-only after construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "IdxFormatError",
    "gen_gaussian_mixture",
    "load_idx",
    "write_idx_images",
    "write_idx_labels",
    "batches",
]

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801

# guards the n*rows*cols product before allocating; generous for desk scale
MAX_IDX_PIXELS = 200_000_000


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    samples: np.ndarray  # (N, n_x) float64, finite
    name: str
    n_x: int
    peak: float  # data-range peak for PSNR
    seed: int | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError(f"samples must be nonempty (N, n_x), got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite sample")
        self.samples.setflags(write=False)

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def _orthant_corners(n_clusters: int, n_x: int, rng) -> np.ndarray:
    if n_clusters > 2**n_x:
        raise ValueError(f"only {2**n_x} distinct orthant corners exist in R^{n_x}")
    corners = []
    seen = set()
    while len(corners) < n_clusters:
        c = rng.choice([-1.0, 1.0], size=n_x)
        key = tuple(c)
        if key not in seen:
            seen.add(key)
            corners.append(c)
    return np.array(corners)


def gen_gaussian_mixture(n_clusters: int, n_x: int, points_per_cluster: int,
                         spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian blobs around fixed centers.

    Centers sit on the unit circle for n_x=2 and on random distinct orthant
    corners for other dimensions. spread is the per-coordinate noise std;
    spread=0 collapses every sample onto its center exactly.
    """
    if n_clusters < 1 or n_x < 1 or points_per_cluster < 1:
        raise ValueError("n_clusters, n_x, points_per_cluster must be positive")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    if n_x == 2:
        angles = 2.0 * np.pi * np.arange(n_clusters) / n_clusters
        centers = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        centers = _orthant_corners(n_clusters, n_x, rng)
    samples = np.repeat(centers, points_per_cluster, axis=0)
    if spread > 0:
        samples = samples + rng.normal(0.0, spread, size=samples.shape)
    labels = np.repeat(np.arange(n_clusters), points_per_cluster)
    peak = float(samples.max() - samples.min())
    return Dataset(samples=samples, name=f"gaussian_mixture_{n_clusters}",
                   n_x=n_x, peak=peak, seed=seed, labels=labels)


def _read_idx_header(raw: bytes, path: str, expected_magic: int, n_dims: int):
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise IdxFormatError(f"truncated file: {path} has {len(raw)} bytes, "
                             f"header alone needs {header_len}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"bad magic in {path}: got 0x{magic:08x}, "
                             f"expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    return dims, raw[header_len:]


def load_idx(images_path: str, labels_path: str | None = None) -> Dataset:
    """Parse big-endian IDX image (and optional label) files.

    Pixels are scaled to [0,1] and flattened to rows*cols features; PSNR
    peak is 1.0. Distinct diagnostics for bad magic, truncation, dimension
    overflow, and image/label count mismatch.
    """
    with open(images_path, "rb") as fh:
        raw = fh.read()
    (n, rows, cols), payload = _read_idx_header(raw, images_path, IDX_MAGIC_IMAGES, 3)
    total = n * rows * cols
    if total > MAX_IDX_PIXELS:
        raise IdxFormatError(f"dimension overflow in {images_path}: "
                             f"{n}x{rows}x{cols} = {total} pixels exceeds {MAX_IDX_PIXELS}")
    if n == 0 or rows == 0 or cols == 0:
        raise IdxFormatError(f"bad dimensions in {images_path}: {n}x{rows}x{cols}")
    if len(payload) < total:
        raise IdxFormatError(f"truncated file: {images_path} payload has "
                             f"{len(payload)} bytes, expected {total}")
    if len(payload) > total:
        raise IdxFormatError(f"trailing bytes in {images_path}: payload has "
                             f"{len(payload)} bytes, expected {total}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    samples = pixels.astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            raw_l = fh.read()
        (n_labels,), payload_l = _read_idx_header(raw_l, labels_path, IDX_MAGIC_LABELS, 1)
        if n_labels != n:
            raise IdxFormatError(f"count mismatch: {images_path} has {n} images "
                                 f"but {labels_path} has {n_labels} labels")
        if len(payload_l) < n_labels:
            raise IdxFormatError(f"truncated file: {labels_path} payload has "
                                 f"{len(payload_l)} bytes, expected {n_labels}")
        labels = np.frombuffer(payload_l[:n_labels], dtype=np.uint8).astype(np.int64)
    return Dataset(samples=samples, name="idx", n_x=rows * cols, peak=1.0,
                   labels=labels)


def write_idx_images(images: np.ndarray, path: str) -> None:
    """Serialize (N, rows, cols) uint8 images in IDX format."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ValueError(f"need (N, rows, cols) uint8, got {images.shape} {images.dtype}")
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(labels: np.ndarray, path: str) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError(f"need 1-D labels, got shape {labels.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def batches(dataset: Dataset, b: int, seed, shuffle: bool = True) -> list:
    """One epoch of size-b batches; the final partial chunk is dropped.

    seed may be an int or a sequence of ints (handy for folding an epoch
    counter into a base seed). shuffle=False keeps dataset order.
    """
    n = dataset.n
    if b < 1:
        raise ValueError("batch size must be positive")
    if b > n:
        raise ValueError(f"batch size {b} exceeds dataset size {n}")
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    else:
        order = np.arange(n)
    n_batches = n // b
    return [dataset.samples[order[i * b:(i + 1) * b]] for i in range(n_batches)]
