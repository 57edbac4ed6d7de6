"""Seed handling shared by the samplers."""

import numpy as np


def seed_sequence(seed):
    """Accept ``None``, an int or an existing ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
