import numpy as np
import pytest
from PIL import Image

from benfordgan.imageio import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gray_random(rng):
    """64x64 random-texture grayscale image (fast to extract from)."""
    luma = rng.uniform(0.0, 255.0, size=(64, 64))
    return GrayImage(width=64, height=64, luma=luma)


@pytest.fixture
def png_256(tmp_path, rng):
    """A 256x256 color PNG on disk."""
    arr = rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8)
    path = tmp_path / "img256.png"
    Image.fromarray(arr, "RGB").save(path)
    return path
