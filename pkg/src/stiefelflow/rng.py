"""Keyed, reproducible random streams.

A stream is (seed, key) where key is a tuple of non-negative integers
(run index, cycle index, step index, ...).  Identical (seed, key) pairs
always produce identical Gaussian sequences; distinct keys give
statistically independent streams, so parallel work just needs distinct
keys.  Backed by numpy's SeedSequence spawn keys.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: tuple = ()

    def child(self, *indices) -> "RngStream":
        """Derive an independent sub-stream by extending the key."""
        return RngStream(self.seed, self.key + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.default_rng(ss)
