"""Counter-based random numbers with random access.

Every uniform is a pure function of ``(key, counter)``:

    u = (splitmix64(key + (counter + 1) * GAMMA) >> 11) * 2**-53

where ``splitmix64`` is the SplitMix64 finaliser (Steele, Lea & Flood 2014).
Per-trial keys are ``blake2b(seed, trial, stream)`` truncated to 64 bits, so
trials are independent streams and adding trials never disturbs earlier ones.
The arithmetic is unsigned 64-bit and therefore bit-identical on every
platform.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream tags keep unrelated consumers of one trial apart
STEP = 0
AUX = 1
START = 2


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def trial_key(seed: int, trial: int, stream: int = STEP) -> np.uint64:
    digest = hashlib.blake2b(
        struct.pack("<QQQ", check_seed(seed), int(trial), int(stream)), digest_size=8
    ).digest()
    return np.uint64(int.from_bytes(digest, "little"))


def trial_keys(seed: int, trials, stream: int = STEP) -> np.ndarray:
    return np.array([trial_key(seed, t, stream) for t in trials], dtype=np.uint64)


def uniforms(keys, counters) -> np.ndarray:
    """Uniforms in [0, 1) for broadcast ``keys`` x ``counters``."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(keys + (counters + np.uint64(1)) * GAMMA)
    return (z >> np.uint64(11)).astype(np.float64) * (2.0**-53)


class Stream:
    """Sequential view of one counter-based stream (for scalar code paths)."""

    def __init__(self, seed: int, trial: int = 0, stream: int = STEP):
        self.key = trial_key(seed, trial, stream)
        self.counter = 0

    def random(self, size: int | None = None):
        n = 1 if size is None else int(size)
        out = uniforms(self.key, np.arange(self.counter, self.counter + n, dtype=np.uint64))
        self.counter += n
        return float(out[0]) if size is None else out
