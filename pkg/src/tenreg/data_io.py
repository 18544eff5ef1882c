"""IDX-format image/label ingestion and deterministic dataset splitting.

The IDX container is the MNIST family's big-endian binary layout: a magic
word, 32-bit dimension sizes, then raw unsigned bytes.  Parsing is strict
(exact payload length, validated label range) and each failure mode gets
its own exception type so callers can tell a wrong file from a damaged
one.  Gzip-compressed files are accepted when the name ends in ``.gz``.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10


class IdxError(ValueError):
    """Base class for IDX parsing failures."""


class IdxMagicError(IdxError):
    """The file's magic word does not announce the expected content."""


class IdxTruncationError(IdxError):
    """The payload length does not match the header's dimensions."""


class IdxLabelRangeError(IdxError):
    """A label byte falls outside the supported class range."""


@dataclass(frozen=True)
class Dataset:
    """Image tensors with labels: inputs (S, rows, cols, 1) in [0, 1],
    integer labels in [0, NUM_CLASSES)."""

    inputs: np.ndarray
    labels: np.ndarray
    name: str

    def __init__(self, inputs, labels, name=""):
        inputs = np.asarray(inputs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if inputs.ndim != 4 or inputs.shape[3] != 1:
            raise ValueError(
                f"inputs must be (samples, rows, cols, 1), got {inputs.shape}"
            )
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[0]:
            raise ValueError(
                f"{labels.shape[0] if labels.ndim == 1 else '?'} labels for "
                f"{inputs.shape[0]} samples"
            )
        if inputs.size and (inputs.min() < 0.0 or inputs.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            raise ValueError(
                f"labels must lie in [0, {NUM_CLASSES}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "name", str(name))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, indices, name=None) -> "Dataset":
        return Dataset(
            self.inputs[indices],
            self.labels[indices],
            self.name if name is None else name,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/validation split sizes with a shuffle seed."""

    train_size: int
    val_size: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.train_size < 1 or self.val_size < 1:
            raise ValueError("split sizes must be at least 1")


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX image file into (count, rows, cols) float64 pixels in
    [0, 1] (byte value / 255)."""
    if len(data) < 16:
        raise IdxTruncationError(
            f"image header needs 16 bytes, file has {len(data)}"
        )
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise IdxMagicError(
            f"expected image magic 0x{IMAGE_MAGIC:08x}, got 0x{magic:08x}"
        )
    expected = count * rows * cols
    payload = data[16:]
    if len(payload) != expected:
        raise IdxTruncationError(
            f"header promises {count}x{rows}x{cols} = {expected} pixel "
            f"bytes, file carries {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Decode an IDX label file into an int64 vector, values checked
    against the supported class range."""
    if len(data) < 8:
        raise IdxTruncationError(
            f"label header needs 8 bytes, file has {len(data)}"
        )
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise IdxMagicError(
            f"expected label magic 0x{LABEL_MAGIC:08x}, got 0x{magic:08x}"
        )
    payload = data[8:]
    if len(payload) != count:
        raise IdxTruncationError(
            f"header promises {count} label bytes, file carries "
            f"{len(payload)}"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() >= NUM_CLASSES:
        raise IdxLabelRangeError(
            f"label {labels.max()} outside [0, {NUM_CLASSES})"
        )
    return labels


def encode_idx_images(pixels: np.ndarray) -> bytes:
    """Inverse of parse_idx_images for byte-valued pixel arrays
    (count, rows, cols) of dtype uint8."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3:
        raise ValueError(f"expected (count, rows, cols), got {pixels.shape}")
    header = struct.pack(">IIII", IMAGE_MAGIC, *pixels.shape)
    return header + pixels.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("expected a label vector")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in a byte")
    header = struct.pack(">II", LABEL_MAGIC, labels.size)
    return header + labels.astype(np.uint8).tobytes()


def read_idx_bytes(path) -> bytes:
    """Read a file, transparently gunzipping when the name ends in .gz."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


_SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "t10k": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find_file(data_dir, stem: str) -> str:
    for name in (stem, stem + ".gz"):
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"neither {stem} nor {stem}.gz found in {data_dir}"
    )


def load_dataset(data_dir, split: str = "train", name: str = "") -> Dataset:
    """Load one MNIST-style split ("train" or "t10k") from a directory of
    IDX files, adding the trailing channel axis."""
    if split not in _SPLIT_FILES:
        raise ValueError(f"unknown split {split!r}; expected train or t10k")
    image_stem, label_stem = _SPLIT_FILES[split]
    images = parse_idx_images(read_idx_bytes(_find_file(data_dir, image_stem)))
    labels = parse_idx_labels(read_idx_bytes(_find_file(data_dir, label_stem)))
    if images.shape[0] != labels.shape[0]:
        raise IdxError(
            f"{images.shape[0]} images but {labels.shape[0]} labels in "
            f"{data_dir}"
        )
    return Dataset(images[..., None], labels, name or f"{split}@{data_dir}")


def split(d: Dataset, s: SplitSpec):
    """Split into disjoint (train, validation) subsets by seeded shuffle;
    validation indices are drawn first, then train_size from the rest."""
    total = len(d)
    if s.train_size + s.val_size > total:
        raise ValueError(
            f"cannot draw {s.train_size} + {s.val_size} samples from {total}"
        )
    order = np.random.default_rng(s.seed).permutation(total)
    val_idx = np.sort(order[: s.val_size])
    train_idx = np.sort(order[s.val_size : s.val_size + s.train_size])
    return (
        d.subset(train_idx, f"{d.name}[train]"),
        d.subset(val_idx, f"{d.name}[val]"),
    )
