"""Deterministic seed derivation for nested randomized stages.

Every randomized operation takes an explicit 64-bit seed.  Stages that need
several independent streams derive child seeds with mix_seed (a splitmix64
step), so reruns with the same root seed are bit-identical and retries use
fresh but reproducible streams.
"""

from __future__ import annotations

import random

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seed(seed: int, counter: int) -> int:
    """Derive a child seed from (seed, counter); counter-mixing for retries."""
    return splitmix64((seed & _MASK) ^ splitmix64(counter & _MASK))


def make_rng(seed: int, counter: int = 0) -> random.Random:
    return random.Random(mix_seed(seed, counter))
