"""Dataset ingestion: IDX files and a synthetic blob generator."""

import struct
from dataclasses import dataclass

import numpy as np

from ._rng import DATA, stream
from .errors import FileFormatError
from .ops import ExampleBatch, LabelBatch, clamp01

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class DatasetSource:
    """Paired examples and labels; pixel bytes map to [0, 1] by b / 255."""

    examples: ExampleBatch
    labels: LabelBatch

    def __post_init__(self):
        if self.examples.n != self.labels.n:
            raise ValueError(
                f"image count {self.examples.n} does not match label count {self.labels.n}")


def _read_u32_be(f, what: str) -> int:
    buf = f.read(4)
    if len(buf) != 4:
        raise FileFormatError(f"unexpected end of file reading {what}")
    return struct.unpack(">I", buf)[0]


def load_idx(images_path, labels_path) -> DatasetSource:
    """Parse a big-endian IDX image/label file pair.

    Image magic 0x00000803 (count, rows, cols), label magic 0x00000801.
    Rows x cols flatten to the feature dimension.
    """
    with open(images_path, "rb") as f:
        magic = _read_u32_be(f, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise FileFormatError(f"wrong magic 0x{magic:08x} in image file")
        count = _read_u32_be(f, "image count")
        rows = _read_u32_be(f, "row count")
        cols = _read_u32_be(f, "column count")
        payload = f.read(count * rows * cols + 1)
        if len(payload) < count * rows * cols:
            raise FileFormatError("unexpected end of file in image payload")
        if len(payload) > count * rows * cols:
            raise FileFormatError("trailing bytes after image payload")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_u32_be(f, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise FileFormatError(f"wrong magic 0x{magic:08x} in label file")
        label_count = _read_u32_be(f, "label count")
        payload = f.read(label_count + 1)
        if len(payload) < label_count:
            raise FileFormatError("unexpected end of file in label payload")
        if len(payload) > label_count:
            raise FileFormatError("trailing bytes after label payload")
        labels = np.frombuffer(payload, dtype=np.uint8)

    if count != label_count:
        raise FileFormatError(f"image count {count} does not match label count {label_count}")
    examples = (pixels.astype(np.float32) / np.float32(255.0))
    return DatasetSource(ExampleBatch(examples), LabelBatch(labels.astype(np.int64)))


def write_idx(images_path, labels_path, pixels: np.ndarray, labels: np.ndarray,
              rows: int, cols: int) -> None:
    """Write uint8 pixels (n, rows*cols) and labels as an IDX pair."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    n = pixels.shape[0]
    if pixels.shape != (n, rows * cols) or labels.shape != (n,):
        raise ValueError("pixel/label shapes inconsistent with rows x cols")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def blob_centers(classes: int, d: int) -> np.ndarray:
    """Class centers offset from the box midpoint along coordinate axes."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    centers = np.full((classes, d), 0.5, dtype=np.float32)
    for c in range(classes):
        axis = c % d
        sign = 1.0 if (c // d) % 2 == 0 else -1.0
        centers[c, axis] = 0.5 + sign * 0.3
    return centers


def generate_blobs(classes: int, per_class: int, d: int, spread: float,
                   seed: int) -> DatasetSource:
    """Gaussian blobs around per-class centers, clamped into [0, 1]."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    centers = blob_centers(classes, d)
    points = np.empty((classes * per_class, d), dtype=np.float32)
    labels = np.empty(classes * per_class, dtype=np.int64)
    for c in range(classes):
        g = stream(seed, c, DATA)
        noise = g.standard_normal((per_class, d)).astype(np.float32)
        rows = slice(c * per_class, (c + 1) * per_class)
        points[rows] = clamp01(centers[c] + np.float32(spread) * noise)
        labels[rows] = c
    return DatasetSource(ExampleBatch(points), LabelBatch(labels))
