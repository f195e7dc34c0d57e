import os
from pathlib import Path

import numpy as np
import pytest

from absnet import data

MNIST_DIR = Path(os.environ.get(data.DATA_DIR_ENV) or "/root/data/mnist")

ACCEPTANCE_LINES: list[str] = []


def mnist_available() -> bool:
    try:
        return all(p.exists() for split in ("train", "test") for p in data.mnist_paths(MNIST_DIR, split))
    except OSError:
        return False


@pytest.fixture
def mnist_dir():
    if not mnist_available():
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR} (set {data.DATA_DIR_ENV})")
    return MNIST_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_fake_mnist(directory: Path, n_train: int = 120, n_test: int = 40, seed: int = 0) -> Path:
    """Tiny IDX files where class k lights up a 4x4 patch at a class-specific spot."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for split, n in (("train", n_train), ("test", n_test)):
        labels = np.arange(n) % 10
        rng.shuffle(labels)
        images = rng.integers(0, 40, size=(n, 28, 28)).astype(np.uint8)
        for i, k in enumerate(labels):
            r, c = 2 + 6 * (k // 4), 2 + 6 * (k % 4)
            images[i, r:r + 4, c:c + 4] = 255
        img_path, lbl_path = data.mnist_paths(directory, split)
        data.write_idx_images(img_path, images)
        data.write_idx_labels(lbl_path, labels)
    return directory


@pytest.fixture
def fake_mnist(tmp_path):
    return write_fake_mnist(tmp_path / "mnist")
