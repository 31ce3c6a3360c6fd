from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from fdabnn.data import MNIST_FILES, write_idx

# single slow CPU: wall-clock deadlines only produce flaky failures
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def write_synthetic_mnist(root: Path, n_train: int = 256, n_test: int = 128, seed: int = 0) -> Path:
    """Tiny learnable IDX dataset: each class lights a distinct horizontal band."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for split, n in (("train", n_train), ("test", n_test)):
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        images = rng.integers(0, 40, size=(n, 28, 28)).astype(np.uint8)
        for i, y in enumerate(labels):
            images[i, 2 + 2 * y:4 + 2 * y, 4:24] = 255
        img_name, lbl_name = MNIST_FILES[split]
        write_idx(root / img_name, images)
        write_idx(root / lbl_name, labels)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_mnist(tmp_path_factory) -> Path:
    return write_synthetic_mnist(tmp_path_factory.mktemp("mnist"))
