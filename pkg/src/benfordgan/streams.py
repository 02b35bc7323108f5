"""Deterministic random-stream derivation.

Every source of randomness in the package is a Philox counter-based
generator keyed through ``numpy.random.SeedSequence`` with a fixed
``spawn_key`` domain, so whole experiments replay bit-identically from one
64-bit seed:

    domain 0: per-tree bootstrap / feature-subset streams
    domain 1: per-fold forest seeds
    domain 2: per-image quality-factor draws
    domain 3: train/test split shuffles
"""

import numpy as np

DOMAIN_TREE = 0
DOMAIN_FOLD = 1
DOMAIN_QF_DRAW = 2
DOMAIN_SPLIT = 3


def stream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Philox generator for (seed, domain, index), independent across keys."""
    ss = np.random.SeedSequence(seed, spawn_key=(domain, index))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, domain: int, index: int = 0) -> int:
    """A 64-bit child seed for (seed, domain, index)."""
    ss = np.random.SeedSequence(seed, spawn_key=(domain, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
