"""Parameter-set expansion and per-image feature extraction.

A feature configuration is three ascending parameter sets (first-digit
bases, zig-zag AC frequencies, JPEG quality factors) plus the divergence
order alpha. The extracted vector concatenates (js, renyi, tsallis) for
every combination, quality factor outermost, then frequency, then base;
that ordering is fixed and is what the cache CSV header spells out.
"""

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from ._version import __version__
from .benford import digit_pmf, divergence_triple
from .imageio import GrayImage, partition_blocks
from .spectral import quant_table, quantize_frequency

ALLOWED_BASES = (10, 20, 40, 60)
ALLOWED_FREQS = (1, 2, 3, 4, 5, 6, 7, 8, 9)
ALLOWED_QFS = (80, 85, 90, 95, 100)

DIVERGENCE_NAMES = ("js", "renyi", "tsallis")

DEFAULT_ALPHA = 2.0


def _check_subset(values, allowed, label):
    values = tuple(values)
    if not values:
        raise ValueError(f"{label} must not be empty")
    if list(values) != sorted(set(values)):
        raise ValueError(f"{label} must be strictly ascending, got {values}")
    bad = set(values) - set(allowed)
    if bad:
        raise ValueError(f"{label} {sorted(bad)} outside allowed set {allowed}")
    return values


@dataclass(frozen=True)
class FeatureConfig:
    """The parameter sets driving one extraction setup."""

    bases: tuple = ALLOWED_BASES
    freqs: tuple = ALLOWED_FREQS
    qfs: tuple = ALLOWED_QFS
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        object.__setattr__(self, "bases", _check_subset(self.bases, ALLOWED_BASES, "bases"))
        object.__setattr__(self, "freqs", _check_subset(self.freqs, ALLOWED_FREQS, "freqs"))
        object.__setattr__(self, "qfs", _check_subset(self.qfs, ALLOWED_QFS, "qfs"))
        if self.alpha == 1.0:
            raise ValueError("alpha = 1 is not a valid divergence order")

    @property
    def dimensionality(self) -> int:
        return 3 * len(self.bases) * len(self.freqs) * len(self.qfs)

    @property
    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "bases": list(self.bases),
            "freqs": list(self.freqs),
            "qfs": list(self.qfs),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(
            bases=tuple(d["bases"]),
            freqs=tuple(d["freqs"]),
            qfs=tuple(d["qfs"]),
            alpha=float(d["alpha"]),
        )

    def combos(self):
        """(qf, n, b) triples in vector order."""
        for qf in self.qfs:
            for n in self.freqs:
                for b in self.bases:
                    yield qf, n, b


@dataclass(frozen=True)
class FeatureVector:
    """Extracted divergences plus the fingerprint of the producing config.

    ``degenerate_flags`` marks the (qf, n, b) combinations whose quantized
    coefficients were all zero; those entries are still finite (uniform
    histogram) but carry no digit statistics.
    """

    values: np.ndarray
    config_fingerprint: str
    degenerate_flags: tuple = field(default=())

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("feature vector contains non-finite values")


def enumerate_configs(alpha: float = DEFAULT_ALPHA):
    """All 675 extraction setups.

    15 non-empty base subsets (ordered by size, then lexicographically),
    9 ascending frequency prefixes {1}, {1,2}, .., and 5 quality-factor
    prefixes descending from 100: {100}, {95,100}, .., {80,..,100}.
    """
    base_sets = [
        combo for size in range(1, 5) for combo in combinations(ALLOWED_BASES, size)
    ]
    freq_sets = [ALLOWED_FREQS[: k + 1] for k in range(9)]
    qf_sets = [ALLOWED_QFS[5 - k:] for k in range(1, 6)]
    return [
        FeatureConfig(bases=b, freqs=f, qfs=q, alpha=alpha)
        for b in base_sets
        for f in freq_sets
        for q in qf_sets
    ]


def feature_names(cfg: FeatureConfig):
    """Column names in vector order: d_{qf}_{n}_{b}_{js|renyi|tsallis}."""
    return [
        f"d_{qf}_{n}_{b}_{div}" for qf, n, b in cfg.combos() for div in DIVERGENCE_NAMES
    ]


def feature_positions(sub: FeatureConfig, full: FeatureConfig) -> np.ndarray:
    """Indices of ``sub``'s columns inside ``full``'s vector.

    Valid because each (qf, n, b) triple's divergences do not depend on
    which other triples are extracted alongside.
    """
    if sub.alpha != full.alpha:
        raise ValueError("alpha differs between configurations")
    index = {combo: i for i, combo in enumerate(full.combos())}
    positions = []
    for combo in sub.combos():
        if combo not in index:
            raise ValueError(f"{combo} not contained in the full configuration")
        start = 3 * index[combo]
        positions.extend((start, start + 1, start + 2))
    return np.asarray(positions, dtype=np.intp)


def extract_features(img: GrayImage, cfg: FeatureConfig) -> FeatureVector:
    """Run the divergence pipeline over every (qf, n, b) combination.

    The block DCT is computed once per image and reused; quantized values
    are shared across bases for a given (qf, n).
    """
    grid = partition_blocks(img)
    values = np.empty(cfg.dimensionality, dtype=np.float64)
    flags = []
    pos = 0
    for qf in cfg.qfs:
        table = quant_table(qf)
        for n in cfg.freqs:
            quantized = quantize_frequency(grid, n, table)
            for b in cfg.bases:
                pmf = digit_pmf(quantized.values, b)
                triple = divergence_triple(pmf, cfg.alpha)
                values[pos] = triple.js
                values[pos + 1] = triple.renyi
                values[pos + 2] = triple.tsallis
                pos += 3
                flags.append(pmf.nonzero_count == 0)
    return FeatureVector(
        values=values, config_fingerprint=cfg.fingerprint, degenerate_flags=tuple(flags)
    )


# ---------------------------------------------------------------------------
# Feature cache CSV

_CACHE_MAGIC = "# benfordgan feature-cache v1 "


def write_feature_csv(path, rows: Sequence, cfg: FeatureConfig, run_config: Optional[dict] = None):
    """Write the cache: provenance comment line, header row, one row per image.

    ``rows`` holds (image_path, label, group, values) tuples in manifest
    order. Floats use 17 significant digits so reading the file back is
    lossless.
    """
    meta = {
        "fingerprint": cfg.fingerprint,
        "config": cfg.to_dict(),
        "tool_version": __version__,
        "run_config": run_config,
    }
    header = ["image_path", "label", "group"] + feature_names(cfg)
    with open(path, "w", newline="") as fh:
        fh.write(_CACHE_MAGIC + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(header) + "\n")
        for image_path, label, group, values in rows:
            cells = [str(image_path), str(int(label)), str(group)]
            cells.extend(f"{v:.17g}" for v in values)
            fh.write(",".join(cells) + "\n")
    return path


def read_feature_csv(path):
    """Read a cache file back into (meta, paths, labels, groups, matrix)."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith(_CACHE_MAGIC):
            raise ValueError(f"{path}: not a feature cache (missing provenance line)")
        meta = json.loads(first[len(_CACHE_MAGIC):])
        header = fh.readline().rstrip("\n").split(",")
        expected = ["image_path", "label", "group"] + feature_names(
            FeatureConfig.from_dict(meta["config"])
        )
        if header != expected:
            raise ValueError(f"{path}: header does not match the embedded configuration")
        paths, labels, groups, data = [], [], [], []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            paths.append(cells[0])
            labels.append(int(cells[1]))
            groups.append(cells[2])
            data.append([float(c) for c in cells[3:]])
    matrix = np.asarray(data, dtype=np.float64).reshape(len(paths), len(expected) - 3)
    return meta, paths, np.asarray(labels, dtype=np.int64), groups, matrix
