"""Datasets, worker shards and mini-batch iteration."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .models import Batch

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (count, features) float64
    targets: np.ndarray  # (count,) int64
    name: str = "dataset"

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ConfigError(f"dataset {self.name!r} is empty")
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ConfigError(f"dataset {self.name!r} has inconsistent shapes")

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.targets.max()) + 1

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.inputs[indices], self.targets[indices], self.name)


@dataclass
class Shard:
    """One worker's slice of the data.

    ``next_minibatch`` walks the shard in a per-epoch shuffled order and
    returns ``None`` once ``epoch_limit`` passes have been made. An
    incomplete tail within an epoch is dropped so every batch has exactly
    ``m`` samples.
    """

    owner: int
    inputs: np.ndarray
    targets: np.ndarray
    epoch_limit: int = 1
    rng_seed: int = 0
    cursor: int = 0
    epoch: int = 0
    _order: np.ndarray | None = field(default=None, repr=False)
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def exhausted(self) -> bool:
        return self.epoch >= self.epoch_limit

    def next_minibatch(self, m: int) -> Batch | None:
        if m < 1 or m > len(self):
            raise ConfigError(f"mini-batch size {m} does not fit shard {self.owner} of size {len(self)}")
        if self._rng is None:
            self._rng = np.random.default_rng([self.rng_seed, self.owner])
        while not self.exhausted:
            if self._order is None:
                self._order = self._rng.permutation(len(self))
                self.cursor = 0
            if self.cursor + m <= len(self):
                idx = self._order[self.cursor:self.cursor + m]
                self.cursor += m
                return Batch(self.inputs[idx], self.targets[idx])
            self.epoch += 1
            self._order = None
        return None


def shard(dataset: Dataset, n: int, seed: int, epoch_limit: int = 1) -> list[Shard]:
    """Shuffle ``dataset`` by ``seed`` and split it into ``n`` contiguous shards.

    Sizes differ by at most one; the first ``len % n`` shards get the extra sample.
    """
    if n < 1:
        raise ConfigError("number of shards must be positive")
    if n > len(dataset):
        raise ConfigError(f"cannot split {len(dataset)} samples over {n} workers")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    shards = []
    for k, idx in enumerate(np.array_split(perm, n)):
        shards.append(Shard(
            owner=k,
            inputs=dataset.inputs[idx],
            targets=dataset.targets[idx],
            epoch_limit=epoch_limit,
            rng_seed=seed,
        ))
    return shards


def next_minibatch(s: Shard, m: int) -> Batch | None:
    return s.next_minibatch(m)


def _read_idx_header(raw: bytes, expected_magic: int, ndims: int, what: str) -> tuple[int, ...]:
    header_len = 4 + 4 * ndims
    if len(raw) < 4:
        raise ParseError(f"{what}: truncated file (missing magic)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ParseError(f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if len(raw) < header_len:
        raise ParseError(f"{what}: truncated file (header dims)")
    dims = struct.unpack(f">{ndims}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) < expected:
        raise ParseError(f"{what}: truncated file (payload has {len(raw) - header_len} bytes, header says {expected - header_len})")
    return dims


def load_idx(images_path, labels_path, name: str = "mnist") -> Dataset:
    """Parse an IDX image/label file pair (MNIST layout).

    Pixels are unsigned bytes scaled to [0, 1]; images are flattened row-major.
    """
    img_raw = Path(images_path).read_bytes()
    lab_raw = Path(labels_path).read_bytes()
    count, rows, cols = _read_idx_header(img_raw, IMAGES_MAGIC, 3, "images")
    (n_labels,) = _read_idx_header(lab_raw, LABELS_MAGIC, 1, "labels")
    if count != n_labels:
        raise ParseError(f"count mismatch: images header says {count}, labels header says {n_labels}")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=count, offset=8)
    inputs = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), name)


def gen_synthetic(kind: str, count: int, noise: float, seed: int) -> Dataset:
    """Balanced two-class 2-D toy data.

    two-gaussians: clusters centred at (-2, -2) and (2, 2), each a short
    segment along the anti-diagonal blurred by Gaussian noise of std
    ``noise``. two-moons: interleaving half circles with Gaussian jitter of
    std ``noise``.
    """
    if count < 2:
        raise ConfigError("synthetic datasets need at least two samples")
    rng = np.random.default_rng(seed)
    n0 = count // 2 + count % 2
    n1 = count // 2
    if kind == "two-gaussians":
        # points spread along the anti-diagonal so classes stay separable at noise=0
        spread0 = rng.uniform(-1.5, 1.5, size=n0)
        spread1 = rng.uniform(-1.5, 1.5, size=n1)
        x0 = np.column_stack([-2.0 + spread0, -2.0 - spread0])
        x1 = np.column_stack([2.0 + spread1, 2.0 - spread1])
    elif kind == "two-moons":
        t0 = rng.uniform(0.0, np.pi, size=n0)
        t1 = rng.uniform(0.0, np.pi, size=n1)
        x0 = np.column_stack([np.cos(t0), np.sin(t0)])
        x1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    else:
        raise ConfigError(f"unknown synthetic dataset kind {kind!r}")
    inputs = np.vstack([x0, x1])
    if noise > 0:
        inputs = inputs + rng.normal(0.0, noise, size=inputs.shape)
    targets = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(count)
    return Dataset(inputs[order], targets[order], kind)


def placeholder(count: int) -> Dataset:
    """Featureless samples, used to pace runs of batch-independent models."""
    if count < 1:
        raise ConfigError("placeholder dataset needs a positive count")
    return Dataset(np.zeros((count, 0)), np.zeros(count, dtype=np.int64), "none")
