"""Deterministic counter-based random streams.

Every random draw in a run is produced by a Philox generator keyed on a
(seed, tag, index) triple, so the draws for any step, purpose, or
replicate can be regenerated independently of execution order and of how
many threads the numerics use.
"""

from __future__ import annotations

import numpy as np

# Stream tags; stored in the high bits of the second Philox key word so
# that (tag, index) pairs never collide.
TARGET = 1      # mixture geometry (means from the target seed)
INIT = 2        # initial particle draw
PROPAGATE = 3   # per-step propagation noise, index = step
RESAMPLE = 4    # per-step resampling uniforms, index = step
METRICS = 5     # final unweighting resample before sample metrics
REFERENCE = 6   # reference samples from the analytic posterior
ORACLE = 7      # scratch streams for verification oracles

_MASK = (1 << 64) - 1


def stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Return the generator for substream (seed, tag, index)."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    key = np.array(
        [seed & _MASK, ((tag << 48) | (index & ((1 << 48) - 1))) & _MASK],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
