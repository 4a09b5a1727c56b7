"""Counter-based pseudo-random numbers for reproducible test instances.

The stream is a splitmix-style 64-bit mixer applied to ``seed + i * GAMMA``
for counter i = 1, 2, ...; the constants below fully define the stream, so
instances regenerate bit-for-bit from (seed, draw order) alone, independent
of numpy's own RNG state or version.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

_U53 = float(2.0**-53)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Deterministic stream of uniforms/Gaussians driven by a u64 counter."""

    def __init__(self, seed):
        self._seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._pos = 0

    def raw(self, count):
        """Next `count` raw 64-bit words."""
        idx = np.arange(self._pos + 1, self._pos + count + 1, dtype=np.uint64)
        self._pos += count
        return _mix(self._seed + idx * GAMMA)

    def uniform01(self, count):
        """Uniforms in [0, 1), 53-bit resolution."""
        return (self.raw(count) >> np.uint64(11)).astype(np.float64) * _U53

    def uniform_pm1(self, shape):
        """Uniforms in [-1, 1), filled in row-major order."""
        n = int(np.prod(shape))
        return (2.0 * self.uniform01(n) - 1.0).reshape(shape)

    def gaussian(self, shape):
        """Standard normals via Box-Muller, filled in row-major order."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform01(m)  # (0, 1]: keeps log() finite
        u2 = self.uniform01(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(shape)

    def index_sample(self, total, count):
        """First `count` entries of a partial Fisher-Yates shuffle of range(total)."""
        if not 0 <= count <= total:
            raise ValueError("count must be in [0, total]")
        pool = np.arange(total)
        u = self.uniform01(count)
        for i in range(count):
            j = i + int(u[i] * (total - i))
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:count].copy()
