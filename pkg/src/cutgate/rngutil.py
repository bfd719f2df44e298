"""Named, isolated RNG streams.

Every source of randomness in a run is a separate PCG64 stream derived from
one user seed, so toggling a feature (e.g. the surrogate gate) never shifts
the draws seen by unrelated components.
"""

import numpy as np

# fixed stream ids; values are part of the reproducibility contract
GATE = 0
POLICY = 1
WEIGHTED = 2
DATA = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for stream `key` of the given seed (deterministic)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class RngStreams:
    """The four named streams used by a solve run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gate = stream(seed, GATE)
        self.weighted = stream(seed, WEIGHTED)
        self.data = stream(seed, DATA)
        self._episodes = 0

    def episode_rng(self) -> np.random.Generator:
        """Fresh substream for the next rollout episode (policy-sampling side)."""
        rng = stream(self.seed, POLICY, self._episodes)
        self._episodes += 1
        return rng
