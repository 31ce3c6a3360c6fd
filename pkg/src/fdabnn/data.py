"""MNIST (IDX) and CIFAR-10 (binary batch) readers with seeded batching."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

# per-channel (mean, std) of the training split, pixels scaled to [0, 1]
NORMALIZATION = {
    "mnist": ((0.1307,), (0.3081,)),
    "cifar10": ((0.4914, 0.4822, 0.4465), (0.2470, 0.2435, 0.2616)),
}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}


class DataError(IOError):
    pass


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _find(root: Path, name: str) -> Path:
    for candidate in (name, name + ".gz", name.replace("-idx", ".idx"), name.replace("-idx", ".idx") + ".gz"):
        path = root / candidate
        if path.exists():
            return path
    raise DataError(f"missing data file {name} under {root}")


def read_idx(path: str | Path, expected_magic: int) -> np.ndarray:
    raw = _read_bytes(Path(path))
    if len(raw) < 8:
        raise DataError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if body.size != int(np.prod(dims)):
        raise DataError(f"{path}: payload has {body.size} bytes, header promises {int(np.prod(dims))}")
    return body.reshape(dims)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX format (used for fixtures and tooling)."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x00000800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    data = header + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "wb") as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


def read_cifar_batch(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DataError(f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD}-byte records")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    images = rec[:, 1:].reshape(-1, 3, 32, 32)
    return images, labels


@dataclass
class Dataset:
    """Normalized NCHW float32 images with int64 labels."""

    kind: str
    split: str
    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def geometry(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def subset(self, limit: int) -> "Dataset":
        if not limit or limit >= len(self):
            return self
        return Dataset(self.kind, self.split, self.images[:limit], self.labels[:limit])

    def batches(self, batch_size: int, rng: np.random.Generator | None = None,
                augment: bool = False) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield minibatches; ``rng`` shuffles and drives augmentation."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            x = self.images[idx]
            if augment:
                if rng is None:
                    raise ValueError("augmentation needs an rng")
                x = crop_and_flip(x, rng)
            yield x, self.labels[idx]


def crop_and_flip(x: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dy = rng.integers(0, 2 * pad + 1, n)
    dx = rng.integers(0, 2 * pad + 1, n)
    flip = rng.random(n) < 0.5
    out = np.empty_like(x)
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def _normalize(kind: str, images: np.ndarray) -> np.ndarray:
    mean, std = NORMALIZATION[kind]
    x = images.astype(np.float32) / 255.0
    m = np.asarray(mean, np.float32).reshape(1, -1, 1, 1)
    s = np.asarray(std, np.float32).reshape(1, -1, 1, 1)
    return (x - m) / s


def load_dataset(kind: str, split: str, data_dir: str | Path) -> Dataset:
    kind, root = kind.lower(), Path(data_dir)
    if split not in ("train", "test"):
        raise ValueError(f"split must be train or test, got {split!r}")
    if not root.is_dir():
        raise DataError(f"data directory {root} does not exist")
    if kind == "mnist":
        img_name, lbl_name = MNIST_FILES[split]
        images = read_idx(_find(root, img_name), IDX_IMAGES_MAGIC)
        labels = read_idx(_find(root, lbl_name), IDX_LABELS_MAGIC).astype(np.int64)
        if images.ndim != 3 or images.shape[0] != labels.shape[0]:
            raise DataError(f"MNIST {split}: {images.shape[0]} images vs {labels.shape[0]} labels")
        images = images[:, None, :, :]
    elif kind == "cifar10":
        if not (root / CIFAR_FILES[split][0]).exists() and (root / "cifar-10-batches-bin").is_dir():
            root = root / "cifar-10-batches-bin"
        parts = []
        for name in CIFAR_FILES[split]:
            path = root / name
            if not path.exists():
                raise DataError(f"missing data file {name} under {root}")
            parts.append(read_cifar_batch(path))
        images = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
    else:
        raise ValueError(f"unknown dataset {kind!r}")
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise DataError(f"{kind} {split}: label out of range 0..9")
    return Dataset(kind, split, _normalize(kind, images), labels)
