"""Image loading, grayscale conversion, 8x8 block partitioning, and JPEG
recompression.

Thin wrappers around PIL and numpy. All arrays are row-major; luma is kept
real-valued (no rounding) so the downstream transform sees the exact
BT.601 combination.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import PIL
from PIL import Image, UnidentifiedImageError

BLOCK = 8

# BT.601 luma weights, the JPEG luminance definition.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_SUBSAMPLING_CODES = {"4:4:4": 0, "4:2:2": 1, "4:2:0": 2}


class DecodeError(Exception):
    """File exists but cannot be decoded as PNG or baseline JPEG."""


class EncodeError(Exception):
    """JPEG encoder failed to produce the requested file."""


class TooSmallError(ValueError):
    """Image smaller than one 8x8 block in either dimension."""


@dataclass(frozen=True)
class RgbImage:
    """Decoded 8-bit RGB image, pixels shaped (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < BLOCK or self.height < BLOCK:
            raise TooSmallError(
                f"image is {self.width}x{self.height}, need at least {BLOCK}x{BLOCK}"
            )
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array shape {self.pixels.shape} does not match dimensions")


@dataclass(frozen=True)
class GrayImage:
    """Real-valued luma plane in [0, 255], shaped (height, width)."""

    width: int
    height: int
    luma: np.ndarray

    def __post_init__(self):
        if self.width < BLOCK or self.height < BLOCK:
            raise TooSmallError(
                f"image is {self.width}x{self.height}, need at least {BLOCK}x{BLOCK}"
            )
        if self.luma.shape != (self.height, self.width):
            raise ValueError(f"luma array shape {self.luma.shape} does not match dimensions")
        if not np.isfinite(self.luma).all():
            raise ValueError("luma values must be finite")


@dataclass
class BlockGrid:
    """Non-overlapping 8x8 blocks tiling the cropped image in raster order.

    ``blocks`` has shape (K, 8, 8). ``source_dims`` is (width, height) after
    cropping to multiples of 8. The DCT of the blocks is computed lazily and
    cached so repeated extractions at different quantization settings reuse
    one transform pass.
    """

    block_count: int
    blocks: np.ndarray
    source_dims: tuple
    _spectra: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w, h = self.source_dims
        if self.block_count != (w // BLOCK) * (h // BLOCK):
            raise ValueError("block_count inconsistent with source dimensions")
        if self.blocks.shape != (self.block_count, BLOCK, BLOCK):
            raise ValueError(f"blocks shape {self.blocks.shape} invalid for K={self.block_count}")

    @property
    def spectra(self) -> np.ndarray:
        """(K, 8, 8) orthonormal 2D-DCT coefficients, computed once."""
        if self._spectra is None:
            from .spectral import dct2_blocks

            self._spectra = dct2_blocks(self.blocks)
        return self._spectra


def load_image(path) -> RgbImage:
    """Decode a PNG or baseline JPEG file into an RgbImage.

    Grayscale sources are replicated across the three channels. Raises
    OSError for unreadable paths, DecodeError for corrupt or unsupported
    content, TooSmallError below 8x8.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in ("PNG", "JPEG"):
                raise DecodeError(f"{path}: unsupported format {fmt!r}, expected PNG or JPEG")
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    height, width = pixels.shape[:2]
    return RgbImage(width=width, height=height, pixels=pixels)


def to_luma(img: RgbImage) -> GrayImage:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B, real-valued."""
    luma = img.pixels.astype(np.float64) @ _LUMA_WEIGHTS
    return GrayImage(width=img.width, height=img.height, luma=luma)


def partition_blocks(img: GrayImage) -> BlockGrid:
    """Tile the top-left region into 8x8 blocks, raster order.

    Excess right/bottom pixels beyond the largest multiple of 8 are
    discarded; padding would inject synthetic block statistics.
    """
    bw = img.width // BLOCK
    bh = img.height // BLOCK
    if bw == 0 or bh == 0:
        raise TooSmallError(f"image is {img.width}x{img.height}")
    cropped = img.luma[: bh * BLOCK, : bw * BLOCK]
    blocks = (
        cropped.reshape(bh, BLOCK, bw, BLOCK).transpose(0, 2, 1, 3).reshape(-1, BLOCK, BLOCK)
    )
    return BlockGrid(block_count=bh * bw, blocks=blocks, source_dims=(bw * BLOCK, bh * BLOCK))


def recompress_jpeg(src, qf: int, dst, subsampling: str = "4:2:0"):
    """Re-encode ``src`` as a baseline JFIF JPEG at IJG quality ``qf``.

    ``subsampling`` is one of "4:4:4", "4:2:2", "4:2:0". Returns ``dst``.
    """
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor {qf} outside [1, 100]")
    if subsampling not in _SUBSAMPLING_CODES:
        raise ValueError(f"unknown subsampling {subsampling!r}")
    if not os.path.exists(src):
        raise FileNotFoundError(src)
    try:
        with Image.open(src) as img:
            rgb = img.convert("RGB")
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{src}: {exc}") from exc
    try:
        rgb.save(dst, format="JPEG", quality=qf, subsampling=_SUBSAMPLING_CODES[subsampling])
    except OSError as exc:
        raise EncodeError(f"{dst}: {exc}") from exc
    return dst


def encoder_metadata(subsampling: str = "4:2:0") -> dict:
    """Identity of the JPEG encoder behind recompress_jpeg, for run records."""
    return {"encoder": f"Pillow {PIL.__version__} (libjpeg)", "subsampling": subsampling}
