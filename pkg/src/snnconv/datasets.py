"""Dataset loading: IDX image/label files, CSV fallback, and a built-in
synthetic digit set for self-contained runs.

IDX layout (big-endian throughout):

    images: magic 0x00000803, then counts [n, rows, cols], then n*rows*cols
            unsigned bytes
    labels: magic 0x00000801, then count [n], then n unsigned bytes

Images are returned as float64 in [0, 1] shaped (n, 1, rows, cols); labels
as int64.  Malformed files raise DataFormatError with the byte offset of
the first problem; label values outside the class range raise
DataValidationError.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DataValidationError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class DatasetHandle:
    images: np.ndarray     # (n, 1, rows, cols) float64 in [0, 1]
    labels: np.ndarray     # (n,) int64
    name: str = "dataset"

    def __len__(self):
        return self.images.shape[0]

    def subset(self, index) -> "DatasetHandle":
        return DatasetHandle(self.images[index], self.labels[index], self.name)


def _read_exact(fh, n: int, offset: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataFormatError(
            f"truncated {what}: wanted {n} bytes at offset {offset}, got {len(data)}")
    return data


def load_idx_images(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_exact(fh, 16, 0, "image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"bad image magic 0x{magic:08x} at offset 0 in {path.name}, "
                f"expected 0x{IDX_IMAGE_MAGIC:08x}")
        count = n * rows * cols
        raw = _read_exact(fh, count, 16, "image payload")
        extra = fh.read(1)
        if extra:
            raise DataFormatError(f"trailing bytes at offset {16 + count} in {path.name}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, rows, cols)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path, num_classes: int = 10) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_exact(fh, 8, 0, "label header")
        magic, n = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x} at offset 0 in {path.name}, "
                f"expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = _read_exact(fh, n, 8, "label payload")
        extra = fh.read(1)
        if extra:
            raise DataFormatError(f"trailing bytes at offset {8 + n} in {path.name}")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    bad = np.nonzero(labels >= num_classes)[0]
    if bad.size:
        i = int(bad[0])
        raise DataValidationError(
            f"label {labels[i]} at index {i} (byte offset {8 + i}) "
            f"outside 0..{num_classes - 1}")
    return labels


def load_idx_pair(image_path, label_path, num_classes: int = 10,
                  name: str = "idx") -> DatasetHandle:
    images = load_idx_images(image_path)
    labels = load_idx_labels(label_path, num_classes)
    if images.shape[0] != labels.shape[0]:
        raise DataValidationError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    return DatasetHandle(images, labels, name)


def write_idx_images(images: np.ndarray, path) -> None:
    """Inverse of load_idx_images; expects floats in [0, 1]."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[1] != 1:
        raise DataValidationError(f"expected (n, 1, rows, cols), got {images.shape}")
    n, _, rows, cols = images.shape
    pixels = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataValidationError(f"expected 1-d labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise DataValidationError("labels must fit in an unsigned byte")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CSV fallback: header "label,f0,f1,...", one sample per row


def load_csv_dataset(path, image_side: int = 28, num_classes: int = 10,
                     name: str = "csv") -> DatasetHandle:
    path = Path(path)
    want = image_side * image_side
    labels = []
    pixels = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path.name}: empty file") from None
        if not header or header[0] != "label":
            raise DataFormatError(f"{path.name}: line 1: header must start with 'label'")
        if len(header) != want + 1:
            raise DataFormatError(
                f"{path.name}: line 1: expected {want + 1} columns, got {len(header)}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != want + 1:
                raise DataFormatError(
                    f"{path.name}: line {line_no}: expected {want + 1} values, "
                    f"got {len(row)}")
            try:
                labels.append(int(row[0]))
                pixels.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path.name}: line {line_no}: {exc}") from None
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise DataFormatError(f"{path.name}: no data rows")
    bad = np.nonzero((labels < 0) | (labels >= num_classes))[0]
    if bad.size:
        i = int(bad[0])
        raise DataValidationError(
            f"{path.name}: line {i + 2}: label {labels[i]} outside 0..{num_classes - 1}")
    images = np.asarray(pixels, dtype=np.float64).reshape(-1, 1, image_side, image_side)
    if images.min() < 0.0 or images.max() > 1.0:
        raise DataValidationError(f"{path.name}: pixel values outside [0, 1]")
    return DatasetHandle(images, labels, name)


def write_csv_dataset(handle: DatasetHandle, path) -> None:
    n, _, rows, cols = handle.images.shape
    flat = handle.images.reshape(n, rows * cols)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(rows * cols)])
        for label, vec in zip(handle.labels, flat):
            writer.writerow([int(label)] + [f"{v:.6f}" for v in vec])


# ---------------------------------------------------------------------------
# synthetic digit glyphs
#
# 7x5 bitmaps per digit, upscaled to 28x28, randomly shifted and noised.
# Small enough to train in seconds yet hard enough that quantized nets
# leave visible headroom between coarse and fine step counts.

_GLYPHS = {
    0: ["01110",
        "10001",
        "10001",
        "10001",
        "10001",
        "10001",
        "01110"],
    1: ["00100",
        "01100",
        "00100",
        "00100",
        "00100",
        "00100",
        "01110"],
    2: ["01110",
        "10001",
        "00001",
        "00010",
        "00100",
        "01000",
        "11111"],
    3: ["11110",
        "00001",
        "00001",
        "01110",
        "00001",
        "00001",
        "11110"],
    4: ["00010",
        "00110",
        "01010",
        "10010",
        "11111",
        "00010",
        "00010"],
    5: ["11111",
        "10000",
        "11110",
        "00001",
        "00001",
        "10001",
        "01110"],
    6: ["00110",
        "01000",
        "10000",
        "11110",
        "10001",
        "10001",
        "01110"],
    7: ["11111",
        "00001",
        "00010",
        "00100",
        "01000",
        "01000",
        "01000"],
    8: ["01110",
        "10001",
        "10001",
        "01110",
        "10001",
        "10001",
        "01110"],
    9: ["01110",
        "10001",
        "10001",
        "01111",
        "00001",
        "00010",
        "01100"],
}


def _glyph_array(digit: int) -> np.ndarray:
    rows = _GLYPHS[digit]
    return np.array([[float(c) for c in row] for row in rows])


def synthetic_digits(n: int, seed: int = 0, side: int = 28,
                     max_shift: int = 3, noise: float = 0.15) -> DatasetHandle:
    """Deterministic toy digit set in the same shape as the IDX loaders.

    Each sample upscales a 7x5 glyph by 3x, pastes it at a random offset,
    scales its intensity, and adds clipped pixel noise.
    """
    rng = np.random.default_rng(seed)
    scale = 3
    gh, gw = 7 * scale, 5 * scale
    images = np.zeros((n, 1, side, side))
    labels = rng.integers(0, 10, size=n)
    base_r = (side - gh) // 2
    base_c = (side - gw) // 2
    for i in range(n):
        glyph = _glyph_array(int(labels[i]))
        big = np.kron(glyph, np.ones((scale, scale)))
        r = base_r + int(rng.integers(-max_shift, max_shift + 1))
        c = base_c + int(rng.integers(-max_shift, max_shift + 1))
        intensity = rng.uniform(0.6, 1.0)
        canvas = np.zeros((side, side))
        canvas[r:r + gh, c:c + gw] = big * intensity
        canvas += rng.normal(0.0, noise, size=(side, side))
        images[i, 0] = np.clip(canvas, 0.0, 1.0)
    return DatasetHandle(images, labels.astype(np.int64), "synthetic")


def materialize_idx(handle: DatasetHandle, directory, prefix: str) -> tuple:
    """Write a handle out as an IDX pair; returns the two paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image_path = directory / f"{prefix}-images-idx3-ubyte"
    label_path = directory / f"{prefix}-labels-idx1-ubyte"
    write_idx_images(handle.images, image_path)
    write_idx_labels(handle.labels, label_path)
    return image_path, label_path


# ---------------------------------------------------------------------------
# input standardization


def standardization_stats(images: np.ndarray) -> tuple:
    """(mean, std) over the whole batch; std floored away from zero."""
    mean = float(images.mean())
    std = float(images.std())
    if std < 1e-8:
        std = 1.0
    return (mean, std)


def standardize(images: np.ndarray, stats) -> np.ndarray:
    mean, std = stats
    return (images - mean) / std
