"""Checkpoint images and the on-disk store.

Binary image layout (all integers little-endian):

    magic   4 bytes  "SEDR"
    version u16      currently 1
    kind    u8       0 = SYSTEM, 1 = APPLICATION
    seq     u32      checkpoint slot number
    ranks   u16      rank count
    then per rank:
      stage ordinal u32   stage index the image was taken at
      SYSTEM:       u64 len + payload for strand 0, then strand 1
      APPLICATION:  u64 len + payload, then u64 digest of the payload

SYSTEM images store both strands verbatim, including any corruption
present at snapshot time: a restore re-manifests whatever the strands
held, which is exactly what multi-rollback recovery relies on to walk
back past a dirty image.  APPLICATION images hold one validated copy
per rank plus its digest, and at most one such image exists at any
quiescent point: the new image is written to a temp path and atomically
renamed over the previous one only after validation.
"""

import os
import re
import struct

from .kernels import fast_digest

MAGIC = b"SEDR"
VERSION = 1
KIND_SYSTEM = 0
KIND_APPLICATION = 1

_SYS_RE = re.compile(r"^ckpt_sys_(\d+)\.bin$")
APP_IMAGE_NAME = "ckpt_app_current.bin"


class CheckpointError(RuntimeError):
    pass


def _pack_header(kind, seq, ranks):
    return MAGIC + struct.pack("<HBIH", VERSION, kind, seq, ranks)


def _read_header(data):
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic")
    version, kind, seq, ranks = struct.unpack_from("<HBIH", data, 4)
    if version != VERSION:
        raise CheckpointError("unsupported version %d" % version)
    return kind, seq, ranks, 4 + struct.calcsize("<HBIH")


def encode_system_image(seq, stage_ord, pairs):
    parts = [_pack_header(KIND_SYSTEM, seq, len(pairs))]
    for enc0, enc1 in pairs:
        parts.append(struct.pack("<I", stage_ord))
        parts.append(struct.pack("<Q", len(enc0)))
        parts.append(enc0)
        parts.append(struct.pack("<Q", len(enc1)))
        parts.append(enc1)
    return b"".join(parts)


def decode_system_image(data):
    kind, seq, ranks, pos = _read_header(data)
    if kind != KIND_SYSTEM:
        raise CheckpointError("not a system image")
    pairs = []
    stage_ord = 0
    for _ in range(ranks):
        (stage_ord,) = struct.unpack_from("<I", data, pos)
        pos += 4
        (n0,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        enc0 = data[pos : pos + n0]
        pos += n0
        (n1,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        enc1 = data[pos : pos + n1]
        pos += n1
        pairs.append((enc0, enc1))
    if pos != len(data):
        raise CheckpointError("trailing bytes in system image")
    return seq, stage_ord, pairs


def encode_application_image(seq, stage_ord, payloads):
    parts = [_pack_header(KIND_APPLICATION, seq, len(payloads))]
    for enc, digest in payloads:
        parts.append(struct.pack("<I", stage_ord))
        parts.append(struct.pack("<Q", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<Q", digest))
    return b"".join(parts)


def decode_application_image(data):
    kind, seq, ranks, pos = _read_header(data)
    if kind != KIND_APPLICATION:
        raise CheckpointError("not an application image")
    payloads = []
    stage_ord = 0
    for _ in range(ranks):
        (stage_ord,) = struct.unpack_from("<I", data, pos)
        pos += 4
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        enc = data[pos : pos + n]
        pos += n
        (digest,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if fast_digest(enc) != digest:
            raise CheckpointError("application image payload digest mismatch")
        payloads.append((enc, digest))
    if pos != len(data):
        raise CheckpointError("trailing bytes in application image")
    return seq, stage_ord, payloads


class CheckpointStore:
    """Slot files under a run directory.

    System slots are rewritten in place when a re-executed pass crosses
    the same checkpoint stage again; the slot count is therefore
    max(seq)+1 regardless of how many passes ran.
    """

    def __init__(self, run_dir):
        self.run_dir = run_dir
        os.makedirs(run_dir, exist_ok=True)

    def _sys_path(self, seq):
        return os.path.join(self.run_dir, "ckpt_sys_%d.bin" % seq)

    @property
    def app_path(self):
        return os.path.join(self.run_dir, APP_IMAGE_NAME)

    def write_system(self, seq, stage_ord, pairs):
        data = encode_system_image(seq, stage_ord, pairs)
        tmp = self._sys_path(seq) + ".tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, self._sys_path(seq))

    def load_system(self, seq):
        try:
            with open(self._sys_path(seq), "rb") as f:
                data = f.read()
        except FileNotFoundError:
            raise CheckpointError("system slot %d missing" % seq)
        got_seq, stage_ord, pairs = decode_system_image(data)
        if got_seq != seq:
            raise CheckpointError("slot %d holds seq %d" % (seq, got_seq))
        return stage_ord, pairs

    def system_count(self):
        top = -1
        for name in os.listdir(self.run_dir):
            m = _SYS_RE.match(name)
            if m:
                top = max(top, int(m.group(1)))
        return top + 1

    def write_application(self, seq, stage_ord, payloads):
        data = encode_application_image(seq, stage_ord, payloads)
        tmp = self.app_path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        # atomic replace: the previous validated image disappears in the
        # same step the new one lands, never leaving two images visible
        os.replace(tmp, self.app_path)

    def load_application(self):
        try:
            with open(self.app_path, "rb") as f:
                data = f.read()
        except FileNotFoundError:
            return None
        return decode_application_image(data)

    def application_image_count(self):
        return sum(
            1
            for name in os.listdir(self.run_dir)
            if name.startswith("ckpt_app_") and name.endswith(".bin")
        )
