"""Deterministic seed streams.

One root seed fans out into independent generators keyed by integer paths
(module id, sweep point, block index, ...). The same (root, path) always
yields the same stream, on any platform and regardless of call order, which
is what makes matched comparisons and multi-worker runs reproducible.
"""
from __future__ import annotations

import numpy as np

# Fixed module ids; never renumber, only append.
DOMAIN_MAPPING = 1
DOMAIN_PAYLOAD = 2
DOMAIN_CHANNEL = 3
DOMAIN_PHASE_NOISE = 4
DOMAIN_NOISE = 5
DOMAIN_COMPLIANCE = 6
DOMAIN_CODING = 7


def stream(root_seed: int, *path: int) -> np.random.Generator:
    """Generator for the given root seed and integer path."""
    if root_seed < 0:
        raise ValueError("root_seed must be non-negative")
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
