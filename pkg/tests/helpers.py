"""Shared oracles and synthetic data builders for the test suite.

The oracles are deliberately independent of the library's fast paths: the
DCT oracle multiplies by an explicit 64x64 basis matrix built from the
transform definition, the first-digit oracle inspects full digit strings,
and the divergence oracle sums terms one by one with math.fsum.
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import signal

from benfordgan.evaluate import DatasetManifest, ManifestEntry

CLAMP_EPS = 1e-12


# ---------------------------------------------------------------------------
# DCT basis-matrix oracle

def dct_basis_matrix(size: int = 8) -> np.ndarray:
    """Rows are the 2D orthonormal type-II DCT basis functions, flattened."""
    T = np.zeros((size * size, size * size))
    for u in range(size):
        for v in range(size):
            au = math.sqrt(1.0 / size) if u == 0 else math.sqrt(2.0 / size)
            av = math.sqrt(1.0 / size) if v == 0 else math.sqrt(2.0 / size)
            for x in range(size):
                for y in range(size):
                    T[u * size + v, x * size + y] = (
                        au * av
                        * math.cos((2 * x + 1) * u * math.pi / (2 * size))
                        * math.cos((2 * y + 1) * v * math.pi / (2 * size))
                    )
    return T


def dct2_oracle(block: np.ndarray, basis: np.ndarray = None) -> np.ndarray:
    if basis is None:
        basis = dct_basis_matrix()
    return (basis @ np.asarray(block, dtype=np.float64).reshape(-1)).reshape(8, 8)


# ---------------------------------------------------------------------------
# First-digit oracles

def first_digit_str10(value: int) -> int:
    """Base-10 oracle: leading character of the decimal digit string."""
    return int(str(abs(int(value)))[0])


def first_digit_digits(value: int, base: int) -> int:
    """Any-base oracle: full digit decomposition, most significant first."""
    v = abs(int(value))
    assert v != 0
    digits = []
    while v:
        v, r = divmod(v, base)
        digits.append(r)
    return digits[-1]


# ---------------------------------------------------------------------------
# Divergence summation oracles (same clamping policy as the library)

def kl_oracle(q, p, eps: float = CLAMP_EPS) -> float:
    total = []
    for qi, pi in zip(q, p):
        if qi > 0:
            total.append(qi * math.log(max(qi, eps) / max(pi, eps)))
    return math.fsum(total)


def js_oracle(q, p, eps: float = CLAMP_EPS) -> float:
    return kl_oracle(q, p, eps) + kl_oracle(p, q, eps)


def s_alpha_oracle(q, p, alpha: float, eps: float = CLAMP_EPS) -> float:
    total = []
    for qi, pi in zip(q, p):
        if qi > 0:
            total.append(qi**alpha / max(pi, eps) ** (alpha - 1.0))
    return math.fsum(total)


def renyi_oracle(q, p, alpha: float, eps: float = CLAMP_EPS) -> float:
    return (
        math.log(s_alpha_oracle(q, p, alpha, eps)) + math.log(s_alpha_oracle(p, q, alpha, eps))
    ) / (1.0 - alpha)


def tsallis_oracle(q, p, alpha: float, eps: float = CLAMP_EPS) -> float:
    return (2.0 - s_alpha_oracle(q, p, alpha, eps) - s_alpha_oracle(p, q, alpha, eps)) / (
        1.0 - alpha
    )


# ---------------------------------------------------------------------------
# Synthetic image populations

def ar1_field(rng, shape=(256, 256), rho=0.95) -> np.ndarray:
    """Separable 2-D AR(1) field with Laplacian innovations, in [0, 255]."""
    e = rng.laplace(0.0, 1.0, size=shape)
    z = signal.lfilter([1.0], [1.0, -rho], e, axis=0)
    z = signal.lfilter([1.0], [1.0, -rho], z, axis=1)
    return (z - z.min()) / (z.max() - z.min()) * 255.0


def fir_field(rng, shape=(256, 256)) -> np.ndarray:
    """Uniform noise low-pass filtered by a 3x3 box kernel, in [0, 255]."""
    e = rng.uniform(0.0, 1.0, size=(shape[0] + 2, shape[1] + 2))
    z = signal.convolve2d(e, np.ones((3, 3)) / 9.0, mode="valid")
    return (z - z.min()) / (z.max() - z.min()) * 255.0


def build_corpus(root, n_per_class=20, groups=("groupA", "groupB"), seed=7,
                 shape=(256, 256)) -> DatasetManifest:
    """Materialize a two-population corpus: AR(1) images labeled 0 and
    FIR-filtered noise labeled 1, split into groups."""
    rng = np.random.default_rng(seed)
    entries = []
    for g in groups:
        d = Path(root) / g
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            p = d / f"nat_{i:03d}.png"
            Image.fromarray(ar1_field(rng, shape).astype(np.uint8), "L").save(p)
            entries.append(ManifestEntry(path=str(p), label=0, group=g))
        for i in range(n_per_class):
            p = d / f"gan_{i:03d}.png"
            Image.fromarray(fir_field(rng, shape).astype(np.uint8), "L").save(p)
            entries.append(ManifestEntry(path=str(p), label=1, group=g))
    return DatasetManifest(entries=entries, root=str(root))


def write_manifest_csv(manifest: DatasetManifest, path) -> str:
    """Write entries as the `path,label,group` CSV the CLI consumes."""
    with open(path, "w", newline="") as fh:
        fh.write("path,label,group\n")
        for e in manifest.entries:
            fh.write(f"{e.path},{e.label},{e.group}\n")
    return str(path)
