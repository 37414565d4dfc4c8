"""Seed derivation for replicated simulations.

Every stream is ``PCG64(SeedSequence(master, spawn_key=(replication, purpose)))``.
This mapping is part of the on-disk reproducibility contract; do not change it.
Streams are consumed in fixed-size blocks, so the values used at step ``n`` are
a function of ``(master, replication, n)`` alone.
"""

from __future__ import annotations

import numpy as np

SAMPLE_SIZE = 0
DRAW = 1
REINFORCEMENT = 2

BLOCK = 4096


def stream(master_seed: int, replication: int, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replication), int(purpose)))
    return np.random.Generator(np.random.PCG64(seq))


class TrajectoryStreams:
    """The three independent streams driving one replication."""

    def __init__(self, master_seed: int, replication: int):
        self.master_seed = int(master_seed)
        self.replication = int(replication)
        self.sample_size = stream(master_seed, replication, SAMPLE_SIZE)
        self.draw = stream(master_seed, replication, DRAW)
        self.reinforcement = stream(master_seed, replication, REINFORCEMENT)
