"""Deterministic 64-bit RNG primitives (splitmix64) shared by the simulator
and the Monte-Carlo oracle.

Each stream is one uint64 cell in a state array; streams advance
independently, so draws on one stream never perturb another.
"""

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# 2^-53, turns a 53-bit integer into a double in [0, 1)
_INV53 = 1.1102230246251565e-16


def seed_streams(seed, count):
    """Derive `count` independent stream states from a master seed."""
    ss = np.random.SeedSequence(int(seed))
    # generate_state is prefix-stable: growing count extends the array
    # without changing earlier entries
    return ss.generate_state(count, np.uint64)


@njit(cache=True)
def next_u64(states, i):
    states[i] += _GAMMA
    z = states[i]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def uniform01(states, i):
    """Uniform double in [0, 1) with 53-bit resolution."""
    return (next_u64(states, i) >> np.uint64(11)) * _INV53


@njit(cache=True)
def uniform_int(states, i, hi):
    """Uniform integer on {0..hi}; bias is O(hi/2^53)."""
    u = next_u64(states, i) >> np.uint64(11)
    return np.int64((u * np.uint64(hi + 1)) >> np.uint64(53))


@njit(cache=True)
def exponential(states, i, rate):
    """Exponential variate with the given rate (inverse CDF)."""
    return -np.log1p(-uniform01(states, i)) / rate
