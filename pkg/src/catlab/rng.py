"""Counter-based random streams for reproducible parallel Monte Carlo.

Every unit of work (a replicate, a chunk of estimator trials, an auxiliary
sampler) receives its own `numpy` Generator backed by the Philox counter-based
bit generator.  The stream is a pure function of ``(master_seed, index)``:

    key = (index mod 2**64) * 2**64 + (master_seed mod 2**64)

Distinct indices give distinct 128-bit Philox keys, so streams never overlap,
results do not depend on worker count or scheduling order, and any single unit
of work can be replayed in isolation.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# Index-space offsets keep stream families disjoint within one experiment run.
REPLICATE_SPACE = 0
CHUNK_SPACE = 1 << 40
AUX_SPACE = 1 << 41


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Return the Generator for work unit `index` under `master_seed`."""
    key = ((index & _MASK64) << 64) | (master_seed & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
