"""Counter-based random substreams.

Every random quantity in the package is a pure function of
``(master_seed, *indices, counter)``.  Stream keys are built by folding the
indices into the seed with the SplitMix64 finalizer, and a draw is the
finalizer applied to ``key + counter * GOLDEN``.  Because no generator state
is carried between draws, results do not depend on evaluation order or on
how work is split across threads.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (bijective on 64 bits)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, *indices: int) -> int:
    """Derive the key of the substream addressed by ``indices``.

    key_0 = mix64(master_seed); key_{i+1} = mix64(key_i ^ (index_i + 1) * GOLDEN).
    """
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    key = mix64(master_seed)
    for idx in indices:
        if idx < 0:
            raise ValueError(f"stream index must be non-negative, got {idx}")
        key = mix64(key ^ (((idx + 1) * GOLDEN) & MASK64))
    return key


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def raw_bits(keys, counters) -> np.ndarray:
    """64-bit outputs for broadcast arrays of stream keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(keys + counters * np.uint64(GOLDEN))


def uniform_open(keys, counters) -> np.ndarray:
    """Uniforms on the open interval (0, 1): ((bits >> 11) + 0.5) * 2**-53."""
    bits = raw_bits(keys, counters) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * _INV53


def standard_normal(keys, counters) -> np.ndarray:
    """Standard normal draws by inverse CDF of :func:`uniform_open`."""
    return ndtri(uniform_open(keys, counters))


def standard_exponential(keys, counters) -> np.ndarray:
    """Unit-rate exponential draws, ``-log(u)``; strictly positive."""
    u = uniform_open(keys, counters)
    # libm log per element: numpy's vectorized log can differ by one ulp
    flat = np.fromiter(map(math.log, u.ravel().tolist()), dtype=np.float64, count=u.size)
    return -flat.reshape(u.shape)


def uniform_index(keys, counters, n: int) -> np.ndarray:
    """Integers in ``[0, n)`` as ``floor(((bits >> 11) * 2**-53) * n)``."""
    bits = raw_bits(keys, counters) >> np.uint64(11)
    idx = np.floor(bits.astype(np.float64) * _INV53 * n).astype(np.int64)
    return np.minimum(idx, n - 1)


def stream_keys(master_seed: int, *indices) -> np.ndarray:
    """Vectorized :func:`stream_key`; ``indices`` broadcast against each other."""
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    arrays = np.broadcast_arrays(*(np.asarray(i, dtype=np.uint64) for i in indices))
    shape = arrays[0].shape if arrays else ()
    key = np.full(shape, mix64(master_seed), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for idx in arrays:
            key = _mix64_array(key ^ ((idx + np.uint64(1)) * np.uint64(GOLDEN)))
    return key
