"""IDX-format dataset reading and writing.

IDX is the classic big-endian binary layout for image/label sets:
images carry magic 0x00000803 then count/rows/cols and one unsigned
byte per pixel; labels carry magic 0x00000801 then count and one byte
per label.  Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, LabelRangeError, TruncationError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

IMAGE_SIDE = 28
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE

STANDARD_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class ImageBatch:
    """28x28 grayscale images as flat float rows scaled to [0, 1]."""

    images: np.ndarray  # (count, 784) float64
    height: int = IMAGE_SIDE
    width: int = IMAGE_SIDE

    @property
    def count(self) -> int:
        return self.images.shape[0]


@dataclass
class LabelBatch:
    labels: np.ndarray  # (count,) int64 in 0..9

    @property
    def count(self) -> int:
        return self.labels.shape[0]


def _read_bytes(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def load_idx_images(path) -> ImageBatch:
    """Parse an IDX image file; every pixel byte v becomes v / 255."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise TruncationError(f"{path}: expected at least a 16-byte image header, got {len(raw)} bytes")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise DataFormatError(f"{path}: bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise DataFormatError(f"{path}: expected {IMAGE_SIDE}x{IMAGE_SIDE} images, file declares {rows}x{cols}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise TruncationError(f"{path}: expected exactly {expected} bytes, got {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    return ImageBatch(images=pixels.astype(np.float64) / 255.0)


def load_idx_labels(path) -> LabelBatch:
    """Parse an IDX label file; every label byte must be in 0..9."""
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise TruncationError(f"{path}: expected at least an 8-byte label header, got {len(raw)} bytes")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise DataFormatError(f"{path}: bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    expected = 8 + count
    if len(raw) != expected:
        raise TruncationError(f"{path}: expected exactly {expected} bytes, got {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise LabelRangeError(f"{path}: label {labels[bad]} at index {bad} outside 0..9")
    return LabelBatch(labels=labels.astype(np.int64))


def _open_write(path):
    # gzip with mtime pinned so identical content gives identical bytes
    if str(path).endswith(".gz"):
        return gzip.GzipFile(path, "wb", mtime=0)
    return open(path, "wb")


def save_idx_images(path, pixels: np.ndarray) -> None:
    """Write uint8 pixel data (N, 784) or (N, 28, 28) as an IDX image file."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8).reshape(-1, IMAGE_PIXELS)
    header = struct.pack(">IIII", IMAGE_MAGIC, pixels.shape[0], IMAGE_SIDE, IMAGE_SIDE)
    with _open_write(path) as f:
        f.write(header)
        f.write(pixels.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    header = struct.pack(">II", LABEL_MAGIC, labels.shape[0])
    with _open_write(path) as f:
        f.write(header)
        f.write(labels.tobytes())


def _resolve(data_dir: Path, name: str) -> Path:
    plain = data_dir / name
    if plain.exists():
        return plain
    gz = data_dir / (name + ".gz")
    if gz.exists():
        return gz
    raise FileNotFoundError(f"no {name} or {name}.gz under {data_dir}")


def default_data_dir() -> Path:
    return Path(os.environ.get("DISTILBREAK_DATA_DIR", "data"))


def load_dataset(data_dir=None):
    """Load the four standard files from a directory.

    Returns (train_images, train_labels, test_images, test_labels) as
    ImageBatch/LabelBatch pairs.  Raises if a pair's counts disagree.
    """
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    tri = load_idx_images(_resolve(data_dir, STANDARD_NAMES["train_images"]))
    trl = load_idx_labels(_resolve(data_dir, STANDARD_NAMES["train_labels"]))
    tei = load_idx_images(_resolve(data_dir, STANDARD_NAMES["test_images"]))
    tel = load_idx_labels(_resolve(data_dir, STANDARD_NAMES["test_labels"]))
    if tri.count != trl.count:
        raise DataFormatError(f"train image count {tri.count} != label count {trl.count}")
    if tei.count != tel.count:
        raise DataFormatError(f"test image count {tei.count} != label count {tel.count}")
    return tri, trl, tei, tel
