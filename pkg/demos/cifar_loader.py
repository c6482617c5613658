"""
Reading CIFAR-10 binary batches
===============================

Each record is one label byte then 3072 pixel bytes (red, green, blue
planes of a 32x32 image).  Here a tiny fake batch is written and read back;
point ``data.path`` at the real ``cifar-10-batches-bin`` directory to train
on it.
"""

import tempfile
from pathlib import Path

import numpy as np

from stalesgd import read_cifar10_bin, split_data
from stalesgd.datasets import write_cifar10_bin

gen = np.random.default_rng(0)
pixels = gen.integers(0, 256, size=(20, 3072), dtype=np.uint8)
labels = gen.integers(0, 10, size=20)

with tempfile.TemporaryDirectory() as tmp:
    write_cifar10_bin(Path(tmp) / "data_batch_1.bin", pixels[:12], labels[:12])
    write_cifar10_bin(Path(tmp) / "data_batch_2.bin", pixels[12:], labels[12:])
    data = read_cifar10_bin(tmp)

print(data.N, "images of", data.dim, "values in [0, 1]")
print("labels match:", np.array_equal(data.labels, labels))

# disjoint, near-equal subsets, one per data-group
part = split_data(data, 3, seed=0)
print("subset sizes:", [part.size(s) for s in (1, 2, 3)])
