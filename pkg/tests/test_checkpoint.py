"""Checkpoint image codec and store invariants."""

import os

import numpy as np
import pytest

from lockstep.checkpoint import (
    CheckpointError,
    CheckpointStore,
    decode_application_image,
    decode_system_image,
    encode_application_image,
    encode_system_image,
)
from lockstep.encoding import decode_tree, encode_tree
from lockstep.kernels import fast_digest


def _state(rank, salt=0.0):
    return {
        "grid": np.arange(12, dtype=np.float64).reshape(3, 4) + rank + salt,
        "meta": {"iter": np.int64(rank)},
    }


def test_system_image_roundtrip():
    pairs = []
    for rank in range(3):
        pairs.append((encode_tree(_state(rank)), encode_tree(_state(rank, 0.5))))
    blob = encode_system_image(7, 4, pairs)
    seq, stage_ord, got = decode_system_image(blob)
    assert seq == 7
    assert stage_ord == 4
    assert len(got) == 3
    for rank, (enc0, enc1) in enumerate(got):
        assert enc0 == pairs[rank][0]
        assert enc1 == pairs[rank][1]
        tree = decode_tree(enc0)
        assert np.array_equal(tree["grid"], _state(rank)["grid"])


def test_system_image_preserves_corrupt_strand_verbatim():
    # a dirty snapshot must restore dirty; the image layer does not
    # validate system payloads
    clean = encode_tree(_state(0))
    dirty = bytearray(clean)
    dirty[-3] ^= 0x40
    blob = encode_system_image(0, 0, [(clean, bytes(dirty))])
    _, _, got = decode_system_image(blob)
    assert got[0][0] == clean
    assert got[0][1] == bytes(dirty)
    assert got[0][0] != got[0][1]


def test_application_image_roundtrip_and_digest_check():
    payloads = []
    for rank in range(2):
        enc = encode_tree(_state(rank))
        payloads.append((enc, fast_digest(enc)))
    blob = encode_application_image(3, 2, payloads)
    seq, stage_ord, got = decode_application_image(blob)
    assert (seq, stage_ord) == (3, 2)
    assert [p[0] for p in got] == [p[0] for p in payloads]

    corrupt = bytearray(blob)
    corrupt[-12] ^= 0x01  # inside the last payload body
    with pytest.raises(CheckpointError, match="digest mismatch"):
        decode_application_image(bytes(corrupt))


def test_header_validation():
    enc = encode_tree(_state(0))
    blob = encode_system_image(0, 0, [(enc, enc)])
    with pytest.raises(CheckpointError, match="bad magic"):
        decode_system_image(b"XXXX" + blob[4:])
    bad_version = bytearray(blob)
    bad_version[4] = 99
    with pytest.raises(CheckpointError, match="unsupported version"):
        decode_system_image(bytes(bad_version))
    with pytest.raises(CheckpointError, match="not an application image"):
        decode_application_image(blob)
    app_blob = encode_application_image(0, 0, [(enc, fast_digest(enc))])
    with pytest.raises(CheckpointError, match="not a system image"):
        decode_system_image(app_blob)
    with pytest.raises(CheckpointError, match="trailing bytes"):
        decode_system_image(blob + b"\x00")


def test_store_system_slots(tmp_path):
    store = CheckpointStore(str(tmp_path))
    assert store.system_count() == 0
    enc = encode_tree(_state(0))
    for seq, ord_ in ((0, 0), (1, 2), (2, 4)):
        store.write_system(seq, ord_, [(enc, enc)])
    assert store.system_count() == 3

    # re-executed pass overwrites a slot in place: count unchanged
    enc2 = encode_tree(_state(5))
    store.write_system(1, 2, [(enc2, enc2)])
    assert store.system_count() == 3
    stage_ord, pairs = store.load_system(1)
    assert stage_ord == 2
    assert pairs[0][0] == enc2

    with pytest.raises(CheckpointError, match="slot 9 missing"):
        store.load_system(9)
    # no temp residue after writes
    assert not [n for n in os.listdir(str(tmp_path)) if n.endswith(".tmp")]


def test_store_application_single_image(tmp_path):
    store = CheckpointStore(str(tmp_path))
    assert store.load_application() is None
    assert store.application_image_count() == 0
    enc = encode_tree(_state(0))
    store.write_application(0, 0, [(enc, fast_digest(enc))])
    assert store.application_image_count() == 1
    enc2 = encode_tree(_state(1))
    store.write_application(1, 2, [(enc2, fast_digest(enc2))])
    # replace, never accumulate
    assert store.application_image_count() == 1
    seq, stage_ord, payloads = store.load_application()
    assert (seq, stage_ord) == (1, 2)
    assert payloads[0][0] == enc2
    assert not [n for n in os.listdir(str(tmp_path)) if n.endswith(".tmp")]
