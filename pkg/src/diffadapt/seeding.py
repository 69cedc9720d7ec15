"""Deterministic random-stream derivation.

Every random quantity in an experiment comes from one master seed. Streams
are split by a key ``(purpose, run, agent)`` through :class:`numpy.random.SeedSequence`
spawn keys, so a stream never depends on how many other streams were drawn
before it or on the order in which runs execute.
"""

import numpy as np

# Purpose tags are part of the key; never renumber existing entries.
PURPOSES = {
    "network": 0,
    "model": 1,
    "step_sizes": 2,
    "dictionary": 3,
    "feature_map": 4,
    "input": 5,
    "noise": 6,
    "label_flip": 7,
    "csv_rows": 8,
}

# Run index used for quantities fixed across Monte Carlo runs.
FIXED = -1


def seed_sequence(master_seed, purpose, run=FIXED, agent=0):
    """SeedSequence for one ``(purpose, run, agent)`` stream."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    # shift by one: FIXED maps to 0, Monte Carlo run r to r + 1
    key = (PURPOSES[purpose], int(run) + 1, int(agent))
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)


def derive_rng(master_seed, purpose, run=FIXED, agent=0):
    """Independent :class:`numpy.random.Generator` for one stream."""
    return np.random.default_rng(seed_sequence(master_seed, purpose, run, agent))


def derive_seed(master_seed, purpose, run=FIXED, agent=0):
    """A plain 64-bit integer seed for APIs that take an integer."""
    state = seed_sequence(master_seed, purpose, run, agent).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])
