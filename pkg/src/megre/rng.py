"""Deterministic random number generation.

All randomness in the package flows through Philox4x64 counter-based
generators.  A given 64-bit seed yields the same draw sequence on every
platform, and a root seed can be split hierarchically into independent
per-component streams so one number reproduces an entire experiment.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed):
    """Philox-backed Generator for a 64-bit integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_seeds(seed, n):
    """Derive ``n`` independent child seeds from ``seed``, deterministically."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def seed_from(*parts):
    """Combine integers (e.g. root seed + grid coordinates) into one seed."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
