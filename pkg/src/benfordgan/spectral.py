"""Block DCT, zig-zag indexing, and JPEG luminance quantization.

The transform is the separable orthonormal type-II DCT used by JPEG, run
through scipy's FFT-based fast path. Quantization tables follow the IJG
quality scaling of the standard luminance base table; no level shift is
applied before the transform because only AC frequencies are consumed
downstream.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from .imageio import BLOCK, BlockGrid

# Standard JPEG luminance base table (quality 50), raster order.
BASE_LUMA_TABLE = np.array(
    [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ],
    dtype=np.int64,
).reshape(BLOCK, BLOCK)


def _zigzag_positions():
    # Walk the 15 anti-diagonals; even diagonals run bottom-left to
    # top-right, odd ones the reverse, as in the JPEG scan.
    positions = []
    for s in range(2 * BLOCK - 1):
        cols = range(max(0, s - BLOCK + 1), min(s, BLOCK - 1) + 1)
        if s % 2 == 1:
            cols = reversed(cols)
        positions.extend((s - c, c) for c in cols)
    return tuple(positions)


ZIGZAG = _zigzag_positions()


def zigzag_index(n: int):
    """(row, col) of the n-th position of the JPEG zig-zag scan, n in 0..63."""
    if not 0 <= n <= 63:
        raise ValueError(f"zig-zag index {n} outside [0, 63]")
    return ZIGZAG[n]


def dct2_block(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2D type-II DCT of one 8x8 block."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (BLOCK, BLOCK):
        raise ValueError(f"expected an 8x8 block, got {block.shape}")
    return _fft.dctn(block, type=2, norm="ortho")


def dct2_blocks(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal 2D type-II DCT of a (K, 8, 8) block stack."""
    return _fft.dctn(np.asarray(blocks, dtype=np.float64), type=2, norm="ortho", axes=(1, 2))


@dataclass(frozen=True)
class QuantTable:
    """JPEG luminance quantization steps for one quality factor.

    ``steps`` is the 8x8 integer table in raster order; every entry lies in
    [1, 255] and is a deterministic function of ``qf``.
    """

    qf: int
    steps: np.ndarray

    def step_at(self, n: int) -> int:
        """Quantization step at zig-zag position n."""
        r, c = zigzag_index(n)
        return int(self.steps[r, c])


def quant_table(qf: int) -> QuantTable:
    """IJG scaling of the luminance base table.

    scale = 5000 // qf below 50, else 200 - 2 qf; each step is
    clamp((base * scale + 50) // 100, 1, 255). Matches libjpeg.
    """
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor {qf} outside [1, 100]")
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    steps = np.clip((BASE_LUMA_TABLE * scale + 50) // 100, 1, 255).astype(np.int64)
    return QuantTable(qf=qf, steps=steps)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # numpy's round is half-to-even; JPEG quantizers round half away from zero.
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantizedFrequency:
    """Quantized coefficients of one AC frequency across all K blocks."""

    n: int
    qf: int
    values: np.ndarray


def quantize_frequency(grid: BlockGrid, n: int, table: QuantTable) -> QuantizedFrequency:
    """Quantize the n-th zig-zag AC frequency of every block.

    Each coefficient is divided by the step at position n and rounded half
    away from zero. DC (n = 0) is excluded by contract.
    """
    if not 1 <= n <= 63:
        raise ValueError(f"AC frequency index {n} outside [1, 63]")
    r, c = zigzag_index(n)
    coeffs = grid.spectra[:, r, c]
    values = _round_half_away(coeffs / table.steps[r, c]).astype(np.int64)
    return QuantizedFrequency(n=n, qf=table.qf, values=values)
