"""Counter-based seed derivation.

All randomness descends from one master seed.  A stream for trial ``i``
is seeded with ``mix64(master, i)``, a SplitMix64 step, so results do not
depend on how trials are scheduled over workers.

Constants (SplitMix64, Steele/Lea/Flood 2014)::

    golden gamma  0x9E3779B97F4A7C15
    multiplier 1  0xBF58476D1CE4E5B9
    multiplier 2  0x94D049BB133111EB
"""

from concurrent.futures import ThreadPoolExecutor
import os

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(seed, index=0):
    z = (int(seed) + (int(index) + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def rng_for(seed, index=None):
    """Generator for ``seed`` or, if ``index`` is given, for the derived stream."""
    if index is None:
        return np.random.default_rng(int(seed) & MASK64)
    return np.random.default_rng(mix64(seed, index))


def default_threads():
    try:
        return max(1, int(os.environ.get("Q1DLAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, threads=None):
    """Order-preserving map; the worker count only changes wall time."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(total, size):
    """Split ``range(total)`` into consecutive ``(start, stop)`` pairs."""
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]
