"""IDX (MNIST) reading and writing, and synthetic Gaussian blobs."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    """Base class of IDX parse errors."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountError(IdxError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray            # (N, n_in), scaled to [0, 1] for image data
    labels: np.ndarray            # (N,)
    n_classes: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] == 0:
            raise ValueError("a dataset needs at least one row of inputs")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("one label per input row is required")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate mean and variance, computed once."""
        if "moments" not in self._cache:
            self._cache["moments"] = (self.inputs.mean(axis=0), self.inputs.var(axis=0))
        return self._cache["moments"]

    def one_hot(self) -> np.ndarray:
        return np.eye(self.n_classes)[self.labels]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _check_size(raw: bytes, need: int, path) -> None:
    if len(raw) < need:
        raise IdxTruncatedError(f"{path}: expected {need} bytes, found {len(raw)}")


def read_idx_images(path) -> np.ndarray:
    raw = _read(path)
    _check_size(raw, 4, path)
    magic, = struct.unpack(">I", raw[:4])
    if magic != IMAGE_MAGIC:
        raise IdxMagicError(f"{path}: image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    _check_size(raw, 16, path)
    _, n, rows, cols = struct.unpack(">IIII", raw[:16])
    _check_size(raw, 16 + n * rows * cols, path)
    return np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(
        n, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read(path)
    _check_size(raw, 4, path)
    magic, = struct.unpack(">I", raw[:4])
    if magic != LABEL_MAGIC:
        raise IdxMagicError(f"{path}: label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    _check_size(raw, 8, path)
    _, n = struct.unpack(">II", raw[:8])
    _check_size(raw, 8 + n, path)
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path, labels_path, n_classes: int = 10) -> Dataset:
    """IDX image/label pair as a dataset with pixels scaled to [0, 1]."""
    X = read_idx_images(images_path)
    y = read_idx_labels(labels_path)
    if X.shape[0] != y.shape[0]:
        raise IdxCountError(f"{X.shape[0]} images but {y.shape[0]} labels")
    return Dataset(X.astype(np.float64) / 255.0, y, max(n_classes, int(y.max()) + 1))


def write_idx(images_path, labels_path, pixels: np.ndarray, labels: np.ndarray,
              shape: tuple[int, int] | None = None) -> None:
    """Write uint8 pixels ``(N, rows*cols)`` and labels as an IDX pair."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, d = pixels.shape
    rows, cols = shape or (d, 1)
    if rows * cols != d:
        raise ValueError("shape does not match the pixel count")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n) + np.asarray(labels, np.uint8).tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(directory=None) -> Path | None:
    """Directory holding the four raw MNIST files, or ``None``.

    Looks at ``directory``, then ``$PLREGIONS_MNIST_DIR``, then ``~/data/mnist``.
    """
    cands = [directory, os.environ.get("PLREGIONS_MNIST_DIR"), Path.home() / "data" / "mnist"]
    for c in cands:
        if c and all((Path(c) / f).exists() for pair in MNIST_FILES.values() for f in pair):
            return Path(c)
    return None


def load_mnist(directory, split: str = "train") -> Dataset:
    img, lab = MNIST_FILES[split]
    return load_idx(Path(directory) / img, Path(directory) / lab)


def synth_blobs(classes: int, n_per_class: int, dim: int, separation: float,
                seed: int = 0) -> Dataset:
    """Unit-variance isotropic Gaussian clusters.

    Centers are ``separation`` apart: a regular simplex scaled so that every
    pair of centers is at that distance (classes <= dim + 1), otherwise random
    unit directions scaled by ``separation / sqrt(2)``.
    """
    if classes < 1 or n_per_class < 1 or dim < 1 or separation < 0:
        raise ValueError("blob parameters must be positive")
    rng = np.random.default_rng(seed)
    if classes <= dim + 1:
        C = np.zeros((classes, dim))
        m = min(classes, dim)
        C[:, :m] = np.eye(classes, m)
        if classes == dim + 1:
            C[-1] = (1 - np.sqrt(dim + 1)) / dim * np.ones(dim)
        C -= C.mean(axis=0)
        if classes > 1:
            C *= separation / np.linalg.norm(C[0] - C[1])
    else:
        C = rng.standard_normal((classes, dim))
        C *= separation / np.sqrt(2) / np.linalg.norm(C, axis=1, keepdims=True)
    y = np.repeat(np.arange(classes), n_per_class)
    X = C[y] + rng.standard_normal((y.size, dim))
    perm = rng.permutation(y.size)
    return Dataset(X[perm], y[perm], classes)
