"""Counter-based uniform draws keyed by (seed, round, client, slot).

Every draw is a pure function of its key, so a client's requests in a round
form an independent substream that does not depend on iteration order or on
how many other clients are alive. The mixer is SplitMix64's finalizer
applied to a running combination of the key components.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _absorb(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _mix(h + _GOLDEN + np.asarray(x, dtype=np.uint64))


def seed_key(seed: int) -> np.uint64:
    """Reduce an arbitrary integer seed to a 64-bit stream key."""
    h = np.array([int(seed) & _MASK64], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(h + _GOLDEN)[0]


def hash_uint64(key: np.uint64, round_: int, clients: np.ndarray, slots: np.ndarray) -> np.ndarray:
    clients = np.asarray(clients, dtype=np.uint64)
    slots = np.asarray(slots, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = np.full(clients.shape, key, dtype=np.uint64)
        h = _absorb(h, np.uint64(round_))
        h = _absorb(h, clients)
        return _absorb(h, slots)


def uniform(key: np.uint64, round_: int, clients: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """Doubles in [0, 1) built from the top 53 bits of each hash."""
    bits = hash_uint64(key, round_, clients, slots) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


def choose_neighbors(
    key: np.uint64, round_: int, clients: np.ndarray, slots: np.ndarray, degrees: np.ndarray
) -> np.ndarray:
    """Uniform offsets in ``[0, degrees)`` for each (client, slot) draw."""
    off = np.floor(uniform(key, round_, clients, slots) * degrees).astype(np.int64)
    # guard the (measure-zero) rounding case u * deg == deg
    return np.minimum(off, np.asarray(degrees) - 1)
