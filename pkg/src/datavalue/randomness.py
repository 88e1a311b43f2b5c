"""Counter-based deterministic random streams.

Every stochastic choice in the package draws from a Philox generator keyed
by a (master seed, stream index) pair, so stream k's content depends only on
that pair and never on how many other streams were consumed before it. This
is what makes permutation sampling reproducible independent of scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Return an independent generator for the (master_seed, index) pair.

    The same pair always yields the same stream; distinct pairs yield
    statistically independent streams.
    """
    key = [master_seed & _MASK64, index & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))
