"""Seed-splitting policy.

A run has one 64-bit master seed. Every consumer asks for a stream keyed by
``(purpose, trial, *extra)``; the key is folded into a
:class:`numpy.random.SeedSequence` spawn key, so streams do not depend on
the order in which they are requested. This is what lets trials run in any
order, or in parallel, and still produce identical numbers.
"""

import zlib

import numpy as np

# Fixed ids keep the key stable across Python processes (str hash is salted).
_PURPOSE_IDS = {
    "channel": 1,
    "fading": 2,
    "phases": 3,
    "noise": 4,
    "gateway": 5,
    "csi": 6,
    "impairments": 7,
    "phase_noise": 8,
    "symbols": 9,
    "beamforming": 10,
    "coverage": 11,
    "precoding": 12,
}


def purpose_id(purpose):
    if purpose in _PURPOSE_IDS:
        return _PURPOSE_IDS[purpose]
    return 1000 + zlib.crc32(purpose.encode())


def stream(seed, purpose, trial=0, *extra):
    """Return an independent generator for ``(seed, purpose, trial, *extra)``."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    key = (purpose_id(purpose), int(trial), *(int(e) for e in extra))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def child_seed(rng):
    """Draw a fresh 63-bit integer seed from ``rng`` (for stages that store a seed)."""
    return int(rng.integers(0, 2**63 - 1))
