"""Keyed random streams for reproducible, order-independent simulation.

Every stochastic site in the simulator draws from a generator keyed by
(master_seed, purpose tag, *integer keys). Two sites with different keys
produce independent streams, and a stream's output never depends on how
many other streams were consumed before it — which is what makes client
rounds safe to execute in any order or in parallel.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, tag: str, *keys: int) -> np.random.Generator:
    """Derive an independent PCG64 generator from a seed, a tag, and keys.

    Args:
        master_seed: experiment-level seed (any int; folded to 64 bits).
        tag: short ASCII purpose label, e.g. "client-latent".
        keys: non-negative integers (client id, round index, layer, ...).

    Returns:
        A fresh ``np.random.Generator``; calling twice with identical
        arguments yields bitwise-identical draw sequences.
    """
    entropy = [master_seed & _MASK64, int.from_bytes(tag.encode("utf-8"), "little")]
    for k in keys:
        k = int(k)
        if k < 0:
            raise ValueError(f"stream keys must be non-negative, got {k}")
        entropy.append(k)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
