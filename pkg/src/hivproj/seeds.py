"""Deterministic random-stream derivation.

Every stochastic component draws from a generator built by
``stream(master_seed, domain, *indices)``, which seeds numpy's
``SeedSequence(master_seed, spawn_key=(domain, *indices))``. A stream is a
pure function of the master seed and the logical coordinates of the work
item (domain constant, country key, trajectory index, ...), so results do
not depend on scheduling or batching order. Country codes are mapped to a
stable 32-bit key with CRC-32 so the stream does not depend on which other
countries are present in a run.
"""

import zlib

import numpy as np

DOMAIN_PREVALENCE = 1
DOMAIN_E0 = 2
DOMAIN_MLT = 3
DOMAIN_MCMC = 4
DOMAIN_WORLD = 5
DOMAIN_FERTILITY = 6


def country_key(code: str) -> int:
    """Stable 32-bit spawn-key component for a country code."""
    return zlib.crc32(code.encode("utf-8"))


def stream(master_seed: int, domain: int, *indices: int) -> np.random.Generator:
    """Generator for one logical work item, independent of execution order."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(domain, *indices))
    return np.random.default_rng(seq)
