"""Counter-based pseudo-random numbers.

Every random value used by the package is a pure function of a seed and a
tuple of integer counters (site index, direction, walk index, step, ...),
so results do not depend on evaluation order or on how work is split
between threads.

The hash is the SplitMix64 finalizer applied as a chain::

    h = mix(seed + GOLDEN);  h = mix(h + c_k + GOLDEN)  for each counter c_k

and uniforms on [0, 1) take the top 53 bits of ``h``.
"""

import numpy as np

ALGORITHM_ID = "splitmix64-chain-v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_u64(seed, *counters):
    """Hash ``seed`` and integer counters (scalars or broadcastable arrays)."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.uint64) + _GOLDEN)
    for c in counters:
        c = np.asarray(c).astype(np.uint64)
        with np.errstate(over="ignore"):
            h = _mix(h + c + _GOLDEN)
    return h


def uniform(seed, *counters):
    """Uniform doubles in [0, 1) derived from ``hash_u64``."""
    h = hash_u64(seed, *counters)
    return (h >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)
