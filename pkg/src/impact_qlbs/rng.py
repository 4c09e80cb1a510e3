"""Counter-based random substreams.

Every consumer of randomness is identified by ``(root_seed, purpose, index)``.
The root seed and purpose are hashed through :class:`numpy.random.SeedSequence`
into a 128-bit Philox key; the index (a path or run number) is written into
the top 64-bit word of the Philox counter.  Streams for different indices are
therefore disjoint blocks of the same counter space, and introducing a new
purpose or a new index never shifts the numbers seen by an existing one.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# Stable purpose codes; append only.
PURPOSES = {
    "gbm": 1,
    "strategy": 2,
    "beta": 3,
    "thinness": 4,
    "run": 5,
}


def normalize_seed(seed: int) -> int:
    return int(seed) & MASK64


def _key(seed: int, purpose: str) -> np.ndarray:
    ss = np.random.SeedSequence(normalize_seed(seed), spawn_key=(PURPOSES[purpose],))
    return ss.generate_state(2, dtype=np.uint64)


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Generator for substream ``index`` of ``purpose`` under ``seed``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    bitgen = np.random.Philox(key=_key(seed, purpose), counter=int(index) << 192)
    return np.random.Generator(bitgen)


def streams(seed: int, purpose: str, n: int):
    key = _key(seed, purpose)
    for i in range(n):
        yield np.random.Generator(np.random.Philox(key=key, counter=i << 192))


def run_seed(root_seed: int, run_index: int) -> int:
    """64-bit seed for run ``run_index`` of a batch rooted at ``root_seed``."""
    g = stream(root_seed, "run", run_index)
    return int(g.integers(0, MASK64, endpoint=True, dtype=np.uint64))
