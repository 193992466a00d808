"""Dataset ingestion: MNIST IDX files, binarization, one-hot sequences.

IDX files are big-endian: images carry magic 0x00000803 followed by
(count, rows, cols) and unsigned pixel bytes; labels carry magic
0x00000801, a count, and unsigned label bytes. Gzipped files (the form the
dataset is normally distributed in) are read transparently.

The package bundles a 10,000-example subset of the real dataset for
desk-scale runs; point MCTRAIN_MNIST_DIR at a directory holding the
standard full files to run everything at full scale.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxCountMismatchError",
    "load_idx_images",
    "load_idx_labels",
    "load_mnist_idx",
    "load_mnist_dir",
    "binarize_unroll",
    "sequence_onehot",
    "take",
    "resolve_mnist_dir",
    "MNIST_DIR_ENV",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MNIST_DIR_ENV = "MCTRAIN_MNIST_DIR"

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class IdxError(ValueError):
    """Base class for IDX parsing failures."""


class IdxMagicError(IdxError):
    def __init__(self, path, expected: int, found: int):
        super().__init__(f"{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")


class IdxTruncatedError(IdxError):
    def __init__(self, path, expected_bytes: int, actual_bytes: int):
        super().__init__(
            f"{path}: truncated IDX payload, expected {expected_bytes} bytes, got {actual_bytes}"
        )
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes


class IdxCountMismatchError(IdxError):
    def __init__(self, n_images: int, n_labels: int):
        super().__init__(f"image/label count mismatch: {n_images} images vs {n_labels} labels")


@dataclass
class Dataset:
    """A supervised dataset over flat inputs or one-hot sequences.

    inputs is (n, d) float64 for vector data, or (n, T) small unsigned ints
    for sequence data where each entry indexes a one-hot vector of dimension
    input_onehot_dim. one_hot_dim is the number of target classes.
    """

    inputs: np.ndarray
    labels: np.ndarray
    one_hot_dim: int
    input_onehot_dim: int | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels must have the same length")
        if len(self.labels) and self.labels.max() >= self.one_hot_dim:
            raise ValueError("label out of range for one_hot_dim")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def is_sequential(self) -> bool:
        return self.input_onehot_dim is not None


def take(data: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset(data.inputs[idx], data.labels[idx], data.one_hot_dim, data.input_onehot_dim)


def _read_exact(f, n: int, path) -> bytes:
    buf = f.read(n)
    if len(buf) < n:
        raise IdxTruncatedError(path, n, len(buf))
    return buf


def _open(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def load_idx_images(path) -> np.ndarray:
    """Raw image tensor (n, rows, cols) of uint8."""
    with _open(path) as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, path))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(path, IDX_IMAGE_MAGIC, magic)
        payload = _read_exact(f, count * rows * cols, path)
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    with _open(path) as f:
        magic, count = struct.unpack(">ii", _read_exact(f, 8, path))
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(path, IDX_LABEL_MAGIC, magic)
        payload = _read_exact(f, count, path)
    return np.frombuffer(payload, dtype=np.uint8)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair as flat [0,1]-scaled inputs."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxCountMismatchError(len(images), len(labels))
    flat = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), one_hot_dim=10)


def _find_idx_file(directory: Path, stem: str) -> Path:
    for name in (stem + ".gz", stem):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem}[.gz] under {directory}")


def load_mnist_dir(directory) -> tuple[Dataset, Dataset]:
    """(train, test) datasets from a directory with standard MNIST names."""
    directory = Path(directory)
    train = load_mnist_idx(
        _find_idx_file(directory, TRAIN_IMAGES), _find_idx_file(directory, TRAIN_LABELS)
    )
    test = load_mnist_idx(
        _find_idx_file(directory, TEST_IMAGES), _find_idx_file(directory, TEST_LABELS)
    )
    return train, test


def bundled_mnist_dir() -> Path:
    return Path(resources.files("mctrain") / "_bundled")


def resolve_mnist_dir(explicit=None) -> Path:
    """Data directory precedence: explicit argument, environment variable,
    bundled desk-scale subset."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(MNIST_DIR_ENV)
    if env:
        return Path(env)
    return bundled_mnist_dir()


def binarize_unroll(data: Dataset, classes: tuple[int, int] = (0, 1), threshold: float = 0.5) -> Dataset:
    """Restrict to the given classes and unroll each image into a length-784
    sequence of 2-dimensional one-hot pixels (pixel >= threshold is "white").

    Sequences are stored in the compact index form (0 black, 1 white);
    labels are remapped to indices into `classes`.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    keep = np.isin(data.labels, classes)
    if not keep.any():
        raise ValueError(f"no examples with labels in {classes}")
    images = data.inputs[keep]
    sequences = (images >= threshold).astype(np.uint8)
    remap = {c: i for i, c in enumerate(classes)}
    labels = np.array([remap[c] for c in data.labels[keep]], dtype=np.int64)
    return Dataset(sequences, labels, one_hot_dim=len(classes), input_onehot_dim=2)


def sequence_onehot(seq_idx: np.ndarray, dim: int = 2) -> np.ndarray:
    """Materialize the explicit one-hot form (T, dim) of an index sequence."""
    out = np.zeros((len(seq_idx), dim))
    out[np.arange(len(seq_idx)), seq_idx] = 1.0
    return out
