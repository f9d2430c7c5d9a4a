"""Seeded PRNG for reproducible input generation.

xorshift64* with a splitmix64-scrambled seed.  The recipe is fully
specified at the bit level so inputs can be regenerated exactly from a
(seed, label) pair in any language:

    state0   = splitmix64(seed XOR fnv1a64(label))
    step     x ^= x >> 12; x ^= x << 25; x ^= x >> 27   (mod 2^64)
    output   x * 0x2545F4914F6CDD1D                      (mod 2^64)
    uniform  (output >> 11) / 2^53                       in [0, 1)

Batch fills live in `kernels` (hot path); this module holds the scalar
reference implementation the batch kernels are tested against.
"""

from .encoding import fnv1a64

_MASK = 0xFFFFFFFFFFFFFFFF
XORSHIFT_MULT = 0x2545F4914F6CDD1D
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def derive_state(seed: int, label: str) -> int:
    """Nonzero 64-bit state from a run seed and a stream label."""
    z = (seed & _MASK) ^ fnv1a64(label.encode("utf-8"))
    z = (z + _SPLITMIX_GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z or _SPLITMIX_GAMMA


def next_u64(state: int):
    """One xorshift64* step: returns (new_state, output)."""
    x = state & _MASK
    x ^= x >> 12
    x ^= (x << 25) & _MASK
    x ^= x >> 27
    return x, (x * XORSHIFT_MULT) & _MASK


def uniform01(out: int) -> float:
    return (out >> 11) * (1.0 / 9007199254740992.0)
