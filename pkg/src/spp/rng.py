"""Reproducible random streams.

Every stream is a Philox4x64-10 counter-based generator keyed directly by
``(seed, (replication << 16) | component)`` with the counter starting at
zero, so no seed hashing is involved. Component indices used by the
stochastic oracle are listed in :data:`COMPONENTS`.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# oracle sub-stream indices
COMPONENTS = {"grad_G": 0, "K_x": 1, "K_y": 2, "problem": 3, "init": 4}


def stream(seed, replication=0, component=0):
    """Return a numpy Generator for the stream ``(seed, replication, component)``."""
    if replication < 0 or not 0 <= component < (1 << 16):
        raise ValueError("replication must be >= 0 and component in [0, 65536)")
    key = np.array([int(seed) & MASK64, ((int(replication) << 16) | int(component)) & MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
