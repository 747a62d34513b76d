"""Parameter initializers, all driven by an explicit numpy Generator."""

from __future__ import annotations

import numpy as np


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, clip: float = 2.0):
    """Normal(0, std) resampled until every entry lies within clip*std."""
    out = rng.normal(0.0, std, size=shape)
    bound = clip * std
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int):
    """Uniform(-b, b) with b = sqrt(6 / fan_in), the rectifier-gain fan-in form."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
