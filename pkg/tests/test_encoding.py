"""Encoding and digest behavior.

The flip-detection and collision checks are the ground truth for every
validation mechanism in the engine, so they are written against an
independent re-implementation of the hash rather than the module under
test where possible.
"""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockstep.encoding import (
    FNV64_OFFSET,
    FNV64_PRIME,
    EncodingError,
    digest_tree,
    encode_tree,
    fnv1a64,
    format_digest,
)


def fnv1a64_reference(data):
    # independent minimal transcription, kept separate from the module
    h = 14695981039346656037
    for b in data:
        h = ((h ^ b) * 1099511628211) % (1 << 64)
    return h


def test_fnv_constants():
    assert FNV64_OFFSET == 14695981039346656037
    assert FNV64_PRIME == 1099511628211


def test_fnv_known_vectors():
    # classic FNV-1a 64 test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


@given(st.binary(max_size=256))
def test_fnv_matches_reference(data):
    assert fnv1a64(data) == fnv1a64_reference(data)


def test_encoding_deterministic_and_order_independent():
    a = {"x": 1.5, "y": np.arange(6, dtype=np.float64).reshape(2, 3), "z": 7}
    b = {"z": 7, "y": np.arange(6, dtype=np.float64).reshape(2, 3), "x": 1.5}
    assert encode_tree(a) == encode_tree(b)
    assert digest_tree(a) == digest_tree(b)


def test_encoding_distinguishes_types_and_shapes():
    seen = set()
    trees = [
        {"v": 1},
        {"v": 1.0},
        {"v": np.array([1], dtype=np.int64)},
        {"v": np.array([1.0])},
        {"v": np.array([[1.0]])},
        {"v": "1"},
        {"v": b"1"},
        {"v": {"v": 1}},
        {"w": 1},
    ]
    for t in trees:
        seen.add(encode_tree(t))
    assert len(seen) == len(trees)


def test_nested_key_boundary_not_confusable():
    # key/value splits must not collide across nesting
    a = {"ab": {"c": 1}}
    b = {"a": {"bc": 1}}
    assert encode_tree(a) != encode_tree(b)


def test_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(EncodingError):
            encode_tree({"v": bad})
    with pytest.raises(EncodingError):
        encode_tree({"v": np.array([1.0, np.nan])})


def test_rejects_unsupported():
    with pytest.raises(EncodingError):
        encode_tree({"v": np.array([1], dtype=np.int32)})
    with pytest.raises(EncodingError):
        encode_tree({"v": [1, 2]})
    with pytest.raises(EncodingError):
        encode_tree({"v": True})
    with pytest.raises(EncodingError):
        encode_tree({1: 2.0})


def test_exhaustive_single_bit_flip_detection():
    """Every single-bit flip of every element changes the digest.

    Exhaustive over a 4-element array and all 52 mantissa bit positions
    plus the exponent/sign bits that keep the value finite.
    """
    base = np.array([0.0, 1.0, -3.25, 0.7071067811865476])
    d0 = digest_tree({"v": base})
    flips = 0
    for idx in range(base.size):
        bits = base.view(np.uint64).copy()
        for bit in range(64):
            mutated = bits.copy()
            mutated[idx] ^= np.uint64(1) << np.uint64(bit)
            arr = mutated.view(np.float64)
            if not np.all(np.isfinite(arr)):
                continue
            assert digest_tree({"v": arr.copy()}) != d0
            flips += 1
    assert flips >= 4 * 52


def test_collision_scan_random_buffers():
    """10,000 distinct 1 KiB buffers hash to 10,000 distinct digests."""
    rng = np.random.default_rng(0xC0111DE)
    seen = set()
    for _ in range(10_000):
        buf = rng.integers(0, 256, size=1024, dtype=np.uint8).tobytes()
        seen.add(fnv1a64(buf))
    assert len(seen) == 10_000


@settings(max_examples=200)
@given(
    st.dictionaries(
        st.text(min_size=1, max_size=8),
        st.one_of(
            st.integers(min_value=-(2**62), max_value=2**62),
            st.floats(allow_nan=False, allow_infinity=False, width=64),
            st.binary(max_size=16),
        ),
        max_size=6,
    )
)
def test_roundtrip_stability(tree):
    # same tree encodes identically across calls and dict orderings
    enc = encode_tree(tree)
    assert enc == encode_tree(dict(reversed(list(tree.items()))))
    assert fnv1a64(enc) == digest_tree(tree)


def test_format_digest():
    assert format_digest(0) == "0" * 16
    assert format_digest(fnv1a64(b"")) == "cbf29ce484222325"


def test_scalar_encoding_is_ieee_bit_pattern():
    enc = encode_tree({"v": 1.5})
    # u32 count, u16 keylen, key, tag, payload
    assert enc[:4] == struct.pack("<I", 1)
    assert enc[-8:] == struct.pack("<d", 1.5)
