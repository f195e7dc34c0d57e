"""MNIST IDX ingestion, deterministic splitting/batching, synthetic 2-D tasks."""

from __future__ import annotations

import gzip
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATA_DIR_ENV = "ABSNET_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
SYNTH_KINDS = ("linear", "cross", "circle")


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    tag: str = ""
    num_classes: int = 10

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) == 0:
            raise ValueError("dataset must not be empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def subset(self, index, tag: str | None = None) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index],
                       tag if tag is not None else self.tag, self.num_classes)


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(blob: bytes, magic: int, ndim: int, path) -> np.ndarray:
    if len(blob) < 4 + 4 * ndim:
        raise IdxFormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", blob[4:4 + 4 * ndim])
    payload = blob[4 + 4 * ndim:]
    need = math.prod(dims)
    if len(payload) != need:
        raise IdxFormatError(f"{path}: payload has {len(payload)} bytes, header promises {need}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_images(path) -> np.ndarray:
    """Images as float32 ``[N, rows, cols]`` scaled to [0, 1]."""
    raw = _parse_idx(_read_bytes(path), IMAGES_MAGIC, 3, path)
    return raw.astype(np.float32) / np.float32(255)


def load_idx_labels(path) -> np.ndarray:
    return _parse_idx(_read_bytes(path), LABELS_MAGIC, 1, path).astype(np.int64)


def write_idx_images(path, images: np.ndarray):
    """Write uint8 ``[N, rows, cols]`` images (or [0,1] floats, rescaled by 255)."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.rint(images * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def default_data_dir() -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def mnist_paths(data_dir, split: str) -> tuple[Path, Path]:
    if split not in MNIST_FILES:
        raise ValueError(f"split must be one of {sorted(MNIST_FILES)}, got {split!r}")
    data_dir = Path(data_dir)
    out = []
    for name in MNIST_FILES[split]:
        p = data_dir / name
        if not p.exists() and (data_dir / (name + ".gz")).exists():
            p = data_dir / (name + ".gz")
        out.append(p)
    return out[0], out[1]


def load_mnist(data_dir, split: str = "train") -> Dataset:
    img_path, lbl_path = mnist_paths(data_dir, split)
    images = load_idx_images(img_path)
    labels = load_idx_labels(lbl_path)
    if len(images) != len(labels):
        raise IdxFormatError(f"{img_path} holds {len(images)} images but {lbl_path} holds {len(labels)} labels")
    return Dataset(images[:, None, :, :], labels, tag=f"mnist-{split}", num_classes=10)


# ---------------------------------------------------------------------------
# splits and batches
# ---------------------------------------------------------------------------


def split_train_val(ds: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Sequential split: the first ceil(f*N) samples train, the rest validate."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    n_train = math.ceil(train_fraction * n)
    if n < 2 or n_train >= n:
        raise ValueError(f"cannot leave a validation part from {n} samples at fraction {train_fraction}")
    return (ds.subset(slice(0, n_train), f"{ds.tag}:train"),
            ds.subset(slice(n_train, n), f"{ds.tag}:val"))


def batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the last partial batch is kept.

    The permutation comes from PCG64 seeded with ``SeedSequence([seed, epoch])``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# ---------------------------------------------------------------------------
# synthetic 2-D tasks
# ---------------------------------------------------------------------------


def synth_labels(kind: str, points: np.ndarray) -> np.ndarray:
    x1, x2 = points[:, 0], points[:, 1]
    if kind == "linear":
        return (x1 + x2 > 0).astype(np.int64)
    if kind == "cross":
        return (x1 * x2 > 0).astype(np.int64)
    if kind == "circle":
        return (x1 * x1 + x2 * x2 < 0.5).astype(np.int64)
    raise ValueError(f"unknown synthetic dataset {kind!r}; expected one of {SYNTH_KINDS}")


def synth_dataset(kind: str, n: int = 1000, seed: int = 0) -> Dataset:
    """``n`` points uniform on [-1, 1]^2 with noise-free two-class labels."""
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic dataset {kind!r}; expected one of {SYNTH_KINDS}")
    if n < 10:
        raise ValueError("synthetic datasets need n >= 10")
    points = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, 2)).astype(np.float32)
    return Dataset(points, synth_labels(kind, points), tag=f"synth-{kind}", num_classes=2)
