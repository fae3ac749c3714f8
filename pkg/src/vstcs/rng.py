"""Seeded random streams.

All randomness goes through :func:`make_rng`, which builds a numpy
``Generator`` on the counter-based Philox bit generator.  A stream is
identified by the user seed plus a tuple of non-negative integer keys
(stream purpose, work-unit index, ...), so any unit of work can be
reproduced on its own regardless of scheduling order or thread count.
"""

import numpy as np

# stream purposes
SENSING = 1
SIGNAL = 2
NOISE = 3
TRIAL = 4
PATCH = 5
RIC = 6
SUPPORT = 7


def make_rng(seed, *keys):
    """Return a Philox generator keyed by ``(seed, *keys)``."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    entropy = [seed] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed, *keys):
    """Derive a child 64-bit seed for a sub-task (e.g. one signal of a sweep)."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
