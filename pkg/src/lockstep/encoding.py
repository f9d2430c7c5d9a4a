"""Canonical byte encoding and 64-bit digests for state trees.

Every comparison in the execution core (send validation, checkpoint
validation, final validation) reduces to comparing digests of state
trees, so the byte encoding has to be deterministic and injective over
the supported value schema.  Two trees encode to the same bytes iff they
hold the same keys with the same types, shapes, and bit patterns.

Supported node types: float (stored as IEEE-754 binary64), int (signed
64-bit), str, bytes, numpy arrays of dtype float64 or int64 (any rank,
C order), and nested dicts.  Keys are strings and are encoded in sorted
order so the result is independent of insertion order.

Layout (all integers little-endian):

    tree     := u32 entry_count, entry*
    entry    := u16 key_len, key_utf8, node
    node     := tag u8, payload
    tag 0x01 := f64 scalar, 8-byte IEEE-754
    tag 0x02 := i64 scalar, 8 bytes
    tag 0x03 := f64 array: u8 ndim, u64 dim*, raw C-order data
    tag 0x04 := i64 array: same shape header as 0x03
    tag 0x05 := bytes: u64 len, raw
    tag 0x06 := subtree: tree
    tag 0x07 := str: u64 len, utf8

Non-finite floats (NaN, +/-Inf) are rejected with EncodingError: NaN is
not equal to itself, so admitting it would break the equivalence between
byte equality and value equality that validation relies on.
"""

import struct

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF

_TAG_F64 = 0x01
_TAG_I64 = 0x02
_TAG_F64_ARR = 0x03
_TAG_I64_ARR = 0x04
_TAG_BYTES = 0x05
_TAG_TREE = 0x06
_TAG_STR = 0x07


class EncodingError(ValueError):
    """Raised for values outside the canonical schema."""


def fnv1a64(data: bytes, h: int = FNV64_OFFSET) -> int:
    """FNV-1a over `data`, returning an unsigned 64-bit hash.

    Pass a previous result as `h` to hash incrementally.
    """
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _U64_MASK
    return h


def _encode_node(value, out: list) -> None:
    if isinstance(value, bool):
        # bool is an int subclass but has no place in numeric state
        raise EncodingError("bool is not an encodable value")
    if isinstance(value, float):
        if not np.isfinite(value):
            raise EncodingError("non-finite float %r" % value)
        out.append(struct.pack("<Bd", _TAG_F64, value))
    elif isinstance(value, (int, np.integer)):
        v = int(value)
        if not (-(1 << 63) <= v < (1 << 63)):
            raise EncodingError("int out of 64-bit range: %d" % v)
        out.append(struct.pack("<Bq", _TAG_I64, v))
    elif isinstance(value, np.floating):
        _encode_node(float(value), out)
    elif isinstance(value, np.ndarray):
        if value.dtype == np.float64:
            if not np.all(np.isfinite(value)):
                raise EncodingError("non-finite element in float64 array")
            tag = _TAG_F64_ARR
        elif value.dtype == np.int64:
            tag = _TAG_I64_ARR
        else:
            raise EncodingError("unsupported array dtype %s" % value.dtype)
        if value.ndim > 255:
            raise EncodingError("array rank too large")
        out.append(struct.pack("<BB", tag, value.ndim))
        for dim in value.shape:
            out.append(struct.pack("<Q", dim))
        out.append(np.ascontiguousarray(value).tobytes())
    elif isinstance(value, bytes):
        out.append(struct.pack("<BQ", _TAG_BYTES, len(value)))
        out.append(value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.append(struct.pack("<BQ", _TAG_STR, len(raw)))
        out.append(raw)
    elif isinstance(value, dict):
        out.append(struct.pack("<B", _TAG_TREE))
        _encode_tree(value, out)
    else:
        raise EncodingError("unsupported value type %s" % type(value).__name__)


def _encode_tree(tree: dict, out: list) -> None:
    keys = sorted(tree.keys())
    out.append(struct.pack("<I", len(keys)))
    for key in keys:
        if not isinstance(key, str):
            raise EncodingError("tree keys must be str, got %s" % type(key).__name__)
        raw = key.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EncodingError("key too long")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        _encode_node(tree[key], out)


def encode_tree(tree: dict) -> bytes:
    """Encode a state tree to canonical bytes."""
    if not isinstance(tree, dict):
        raise EncodingError("top-level value must be a dict")
    out: list = []
    _encode_tree(tree, out)
    return b"".join(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise EncodingError("truncated encoding")
        out = self.buf[self.pos : end]
        self.pos = end
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_node(r: _Reader):
    (tag,) = r.unpack("<B")
    if tag == _TAG_F64:
        (v,) = r.unpack("<d")
        return v
    if tag == _TAG_I64:
        (v,) = r.unpack("<q")
        return v
    if tag in (_TAG_F64_ARR, _TAG_I64_ARR):
        (ndim,) = r.unpack("<B")
        shape = tuple(r.unpack("<" + "Q" * ndim)) if ndim else ()
        count = 1
        for dim in shape:
            count *= dim
        dtype = np.float64 if tag == _TAG_F64_ARR else np.int64
        raw = r.take(count * 8)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if tag == _TAG_BYTES:
        (n,) = r.unpack("<Q")
        return r.take(n)
    if tag == _TAG_TREE:
        return _decode_tree(r)
    if tag == _TAG_STR:
        (n,) = r.unpack("<Q")
        return r.take(n).decode("utf-8")
    raise EncodingError("unknown tag 0x%02x" % tag)


def _decode_tree(r: _Reader) -> dict:
    (count,) = r.unpack("<I")
    tree = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        key = r.take(klen).decode("utf-8")
        tree[key] = _decode_node(r)
    return tree


def decode_tree(data: bytes) -> dict:
    """Inverse of encode_tree; round-trips every encodable tree."""
    r = _Reader(data)
    tree = _decode_tree(r)
    if r.pos != len(data):
        raise EncodingError("trailing bytes after encoding")
    return tree


def digest_tree(tree: dict) -> int:
    """Unsigned 64-bit digest of a state tree's canonical encoding."""
    return fnv1a64(encode_tree(tree))


def digest_bytes(data: bytes) -> int:
    return fnv1a64(data)


def format_digest(d: int) -> str:
    """Fixed-width hex form used in event logs and result files."""
    return "%016x" % d
