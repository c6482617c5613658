"""Training data: synthetic Gaussian blobs, the CIFAR-10 binary format,
partitioning across data-groups and with-replacement mini-batch sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as _rng

CIFAR_RECORD = 1 + 3 * 32 * 32


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d_in)
    labels: np.ndarray  # (N,)
    classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError(f"features must be a non-empty (N, d) array, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError("one label per sample required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DatasetError(f"labels outside 0..{self.classes - 1}")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def columns(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inputs for samples ``idx`` in column-per-sample layout, plus labels."""
        return self.features[idx].T, self.labels[idx]


@dataclass(frozen=True)
class DataPartition:
    subsets: tuple[np.ndarray, ...]
    N: int

    @property
    def S(self) -> int:
        return len(self.subsets)

    def size(self, s: int) -> int:
        return self.subsets[s - 1].size

    def weight(self, s: int) -> float:
        """``|D_s| / N``, the factor that makes per-group gradients sum to the full one."""
        return self.subsets[s - 1].size / self.N


@dataclass(frozen=True)
class MiniBatch:
    batch_id: int
    indices: np.ndarray
    s: int


def gen_synthetic(n: int, classes: int, dim: int, seed: int) -> Dataset:
    """Unit-variance Gaussian clusters, one per class, centred at radius 3.

    Labels cycle through the classes before shuffling, so class counts differ
    by at most one.
    """
    if min(n, classes, dim) < 1:
        raise DatasetError("n, classes and dim must all be >= 1")
    gen = np.random.default_rng(seed)
    centers = gen.standard_normal((classes, dim))
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    centers = 3.0 * centers / np.where(norms > 0, norms, 1.0)
    labels = gen.permutation(np.arange(n) % classes)
    features = centers[labels] + gen.standard_normal((n, dim))
    return Dataset(features, labels.astype(np.int64), classes)


def _read_one(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        raise DatasetError(f"{path}: length {raw.size} is not a positive multiple of {CIFAR_RECORD}")
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DatasetError(f"{path}: record {bad} has label byte {labels[bad]} > 9")
    return records[:, 1:], labels


def read_cifar10_bin(path: str | Path | Sequence[str | Path]) -> Dataset:
    """Read CIFAR-10 binary batches.

    ``path`` may be a single ``.bin`` file, a list of files, or a directory,
    in which case its ``data_batch_*.bin`` files are read in name order.
    Each record is one label byte followed by the R, G and B planes of a
    32x32 image; pixels are scaled to [0, 1].
    """
    if isinstance(path, (str, Path)):
        p = Path(path)
        files = sorted(p.glob("data_batch_*.bin")) if p.is_dir() else [p]
        if not files:
            raise DatasetError(f"no data_batch_*.bin files in {p}")
    else:
        files = [Path(f) for f in path]
    pixels, labels = zip(*(_read_one(f) for f in files))
    features = np.concatenate(pixels).astype(np.float64) / 255.0
    return Dataset(features, np.concatenate(labels), 10)


def write_cifar10_bin(path: str | Path, pixels: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 pixel rows ``(N, 3072)`` and labels in the binary batch layout."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    records = np.concatenate([labels[:, None], pixels.reshape(len(labels), -1)], axis=1)
    if records.shape[1] != CIFAR_RECORD:
        raise DatasetError(f"each image needs {CIFAR_RECORD - 1} bytes")
    records.tofile(path)


def split_data(ds: Dataset, S: int, seed: int) -> DataPartition:
    """Seeded permutation cut into ``S`` contiguous chunks of near-equal size."""
    if not 1 <= S <= ds.N:
        raise DatasetError(f"cannot split {ds.N} samples into {S} groups")
    perm = _rng.stream(seed, _rng.PARTITION, S).permutation(ds.N)
    return DataPartition(tuple(np.sort(c) for c in np.array_split(perm, S)), ds.N)


def sample_minibatch(part: DataPartition, s: int, B: int, t: int, rng: np.random.Generator | int) -> MiniBatch:
    """Draw ``B`` indices uniformly with replacement from subset ``s``.

    ``rng`` is either a generator or a master seed; with a seed the draw is
    a pure function of ``(seed, s, t)``.
    """
    if B < 1:
        raise DatasetError("batch size must be >= 1")
    subset = part.subsets[s - 1]
    if subset.size == 0:
        raise DatasetError(f"data-group {s} has no samples")
    gen = _rng.batch_rng(rng, s, t) if isinstance(rng, (int, np.integer)) else rng
    return MiniBatch(t, subset[gen.integers(0, subset.size, size=B)], s)
