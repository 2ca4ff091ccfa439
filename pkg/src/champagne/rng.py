"""Counter-based random numbers for schedule-independent Monte Carlo.

Every variate is a pure function of a 64-bit key and a counter, so a
trial's stream can be replayed from any worker in any order.  Streams are
derived as ``key = mix64(seed XOR trialIndex)``; the generator itself is
the splitmix64 output function, which is cheap enough to call inside
numba kernels.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_TO_DOUBLE = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def stream_key(seed, index):
    """Key for stream `index` of a seeded family (seed XOR index, mixed)."""
    return mix64(U64(seed) ^ U64(index))


def derive_key(seed, index):
    """Python-side stream_key that stays uint64 across numba boundaries."""
    return U64(stream_key(U64(int(seed) & 0xFFFFFFFFFFFFFFFF),
                          U64(int(index) & 0xFFFFFFFFFFFFFFFF)))


@njit(cache=True, inline="always")
def u64_at(key, counter):
    """The `counter`-th raw draw of stream `key`."""
    return mix64(key + _GOLDEN * (U64(counter) + U64(1)))


@njit(cache=True, inline="always")
def uniform_at(key, counter):
    """Uniform double in [0, 1)."""
    return float(u64_at(key, counter) >> U64(11)) * _TO_DOUBLE


@njit(cache=True, inline="always")
def uniform_open_at(key, counter):
    """Uniform double in (0, 1], safe for log()."""
    return (float(u64_at(key, counter) >> U64(11)) + 1.0) * _TO_DOUBLE


@njit(cache=True)
def gaussian_pair_at(key, counter):
    """Box-Muller pair; consumes counters `counter` and `counter+1`."""
    u1 = uniform_open_at(key, counter)
    u2 = uniform_at(key, counter + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    a = 2.0 * np.pi * u2
    return r * np.cos(a), r * np.sin(a)


@njit(cache=True)
def fill_gaussian_at(key, counter, out):
    """Fill `out` with standard normals; returns the next free counter."""
    n = out.shape[0]
    c = counter
    i = 0
    while i + 1 < n:
        g1, g2 = gaussian_pair_at(key, c)
        out[i] = g1
        out[i + 1] = g2
        c += 2
        i += 2
    if i < n:
        g1, _ = gaussian_pair_at(key, c)
        out[i] = g1
        c += 2
    return c


@njit(cache=True)
def unit_vector_at(key, counter, out):
    """Isotropic unit vector via normalized Gaussians; returns next counter.

    Degenerate (underflow-norm) draws are retried with fresh counters;
    the probability is negligible but the guard keeps the kernel total.
    """
    c = counter
    while True:
        c = fill_gaussian_at(key, c, out)
        s = 0.0
        for i in range(out.shape[0]):
            s += out[i] * out[i]
        if s > 1e-280:
            inv = 1.0 / np.sqrt(s)
            for i in range(out.shape[0]):
                out[i] *= inv
            return c
