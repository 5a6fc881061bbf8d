"""Deterministic RNG substreams.

All randomness in the pipeline flows from one 64-bit seed through named
substreams, so runs are reproducible regardless of how work is scheduled.
Substream keys are small integers: a stage code plus indices such as
(member, frequency).
"""

import numpy as np

# Stage codes for substream keys.
STAGE_PARAM_DRAW = 1
STAGE_CONDSIM = 2
STAGE_MEANFIELD = 3
STAGE_SYNTH = 4
STAGE_EVAL = 5
STAGE_CONDSIM_HIGH = 6


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *key).

    Deterministic: the same (seed, key) always yields the same stream, and
    distinct keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
