"""Counter-based random streams (Philox4x32-10).

Every random number used by the package is a pure function of
``(seed, step, node, purpose)``.  The 64-bit seed is the Philox key, the
other three fields fill the 128-bit counter::

    counter = (step & 0xFFFFFFFF, step >> 32, node, purpose)
    key     = (seed & 0xFFFFFFFF, seed >> 32)

and the first two output words ``x0, x1`` are turned into a double in
[0, 1) as ``(((x0 << 32) | x1) >> 11) * 2**-53``.

Because no generator state is carried between draws, a chromatic sweep
gives the same result whatever order the nodes of a color class are
visited in, and trials can be farmed out to workers without changing
any output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

ALGORITHM = "philox4x32-10"

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

# stream purposes (counter word 3)
INIT = 0
UPDATE = 1
DECODE = 2
DERIVE = 3


def philox4x32(counter, key, rounds=10):
    """Reference Philox4x32 block function on Python ints.

    ``counter`` is four 32-bit words, ``key`` two.  Returns four words.
    Slow; used for test vectors and seed derivation only.
    """
    c0, c1, c2, c3 = (int(c) & MASK32 for c in counter)
    k0, k1 = (int(k) & MASK32 for k in key)
    for r in range(rounds):
        if r:
            k0 = (k0 + PHILOX_W0) & MASK32
            k1 = (k1 + PHILOX_W1) & MASK32
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> 32) ^ c1 ^ k0,
            p1 & MASK32,
            (p0 >> 32) ^ c3 ^ k1,
            p0 & MASK32,
        )
    return c0, c1, c2, c3


def uniform_ref(seed, step, node, purpose):
    """Pure-Python twin of :func:`uniform` (for cross-checking)."""
    seed = int(seed) & MASK64
    step = int(step) & MASK64
    x = philox4x32(
        (step & MASK32, step >> 32, node, purpose), (seed & MASK32, seed >> 32)
    )
    return (((x[0] << 32) | x[1]) >> 11) * 2.0**-53


def derive_seed(seed, *labels):
    """Derive a child 64-bit seed from ``seed`` and up to three integer labels.

    Used to give every trial, chain and instance its own key.
    """
    if len(labels) > 3:
        raise ValueError("at most three labels")
    words = [int(v) & MASK32 for v in labels] + [0] * (3 - len(labels))
    seed = int(seed) & MASK64
    x = philox4x32((words[0], words[1], words[2], DERIVE), (seed & MASK32, seed >> 32))
    return (x[0] << 32) | x[1]


@njit(cache=True, nogil=True, inline="always")
def _mulhilo(a, b):
    p = np.uint64(a) * np.uint64(b)
    return np.uint32(p >> np.uint64(32)), np.uint32(p & np.uint64(0xFFFFFFFF))


@njit(cache=True, nogil=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    c0 = np.uint32(c0)
    c1 = np.uint32(c1)
    c2 = np.uint32(c2)
    c3 = np.uint32(c3)
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    for r in range(10):
        if r > 0:
            k0 = np.uint32(k0 + np.uint32(PHILOX_W0))
            k1 = np.uint32(k1 + np.uint32(PHILOX_W1))
        hi0, lo0 = _mulhilo(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def uniform(k0, k1, step, node, purpose):
    """Uniform double in [0, 1) for one (key, step, node, purpose) cell."""
    s = np.uint64(step)
    x0, x1, _, _ = philox_block(
        np.uint32(s & np.uint64(0xFFFFFFFF)),
        np.uint32(s >> np.uint64(32)),
        np.uint32(node),
        np.uint32(purpose),
        k0,
        k1,
    )
    bits = (np.uint64(x0) << np.uint64(32)) | np.uint64(x1)
    return float(bits >> np.uint64(11)) * 1.1102230246251565e-16


def split_key(seed):
    seed = int(seed) & MASK64
    return np.uint32(seed & MASK32), np.uint32(seed >> 32)


@njit(cache=True, nogil=True)
def _uniform_grid(k0, k1, steps, nodes, purpose, out):
    for a in range(steps.shape[0]):
        for b in range(nodes.shape[0]):
            out[a, b] = uniform(k0, k1, steps[a], nodes[b], purpose)


def uniform_grid(seed, steps, nodes, purpose):
    """Array of uniforms indexed ``[step, node]`` for one purpose."""
    steps = np.ascontiguousarray(steps, dtype=np.uint64)
    nodes = np.ascontiguousarray(nodes, dtype=np.uint32)
    out = np.empty((steps.shape[0], nodes.shape[0]))
    k0, k1 = split_key(seed)
    _uniform_grid(k0, k1, steps, nodes, np.uint32(purpose), out)
    return out


@njit(cache=True, nogil=True)
def _uniform_pairs(k0, k1, steps, nodes, purpose, out):
    for a in range(steps.shape[0]):
        out[a] = uniform(k0, k1, steps[a], nodes[a], purpose)


def uniform_pairs(seed, steps, nodes, purpose):
    """Uniforms for the cells ``(steps[t], nodes[t])``, elementwise."""
    steps = np.ascontiguousarray(steps, dtype=np.uint64)
    nodes = np.ascontiguousarray(nodes, dtype=np.uint32)
    if steps.shape != nodes.shape:
        raise ValueError("steps and nodes must have the same shape")
    out = np.empty(steps.shape[0])
    k0, k1 = split_key(seed)
    _uniform_pairs(k0, k1, steps, nodes, np.uint32(purpose), out)
    return out


@dataclass
class Streams:
    """Handle on the per-node streams of one chain.

    ``sweep`` is the step counter used for the next Gibbs sweep and is
    advanced by every sweep kernel, so consecutive calls never reuse
    random numbers.
    """

    seed: int
    sweep: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64

    @property
    def key(self):
        return split_key(self.seed)

    def random_spins(self, n, step=0):
        u = uniform_grid(self.seed, [step], np.arange(n), INIT)[0]
        return np.where(u < 0.5, 1, -1).astype(np.int8)

    def child(self, *labels):
        return Streams(derive_seed(self.seed, *labels))
