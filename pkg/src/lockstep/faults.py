"""One-shot fault injection, the scenario catalog, and its oracle.

A fault fires exactly once per run, including across rollbacks: a
restored pass does not re-arm the injector.  Corruption that was
captured inside a checkpoint image re-manifests through the image
itself, not through re-injection.

Data faults ("flip") XOR one mantissa bit of one array element of one
strand at a stage boundary.  Bit positions are restricted to 0..51: a
single exponent-bit flip can turn a value in [1,2) into Inf/NaN, which
the canonical encoding rejects by contract, and the point of a flip is
a detectable corruption, not a crash.

Index faults ("rewind") model a loop counter jumping backwards: when
the targeted strand's step count inside the stage reaches
floor(total_steps * bit / 64), the targeted loop counter is rewound to
zero, once.  The bit field encodes the trigger fraction (48 -> 3/4,
56 -> 7/8).  Outer rewinds repeat a large prefix of the stage; inner
rewinds repeat one row, which still exceeds the default step budget.

The catalog enumerates 64 scenarios over the matmul stage line under
the reference conformance configuration (size 64, 3 ranks, system
strategy).  Each entry carries a frozen prediction; `predict` derives
the same prediction structurally from the data lifecycle and the
recovery arithmetic, and the two are cross-checked in tests.
"""

import struct

import numpy as np

from .types import FaultSpec, ScenarioPrediction

# matmul stage line indexed by position
_STAGES = ["CK0", "SCATTER", "CK1", "BCAST", "CK2", "MATMUL", "GATHER", "CK3", "VALIDATE"]
_IDX = {label: i for i, label in enumerate(_STAGES)}
_CKPTS = [("CK0", 0), ("CK1", 2), ("CK2", 4), ("CK3", 7)]

_FLIP_BITS = [13, 23, 33, 43, 51]


class Injector:
    """Applies at most one FaultSpec to a running engine."""

    def __init__(self, fault=None):
        self.fault = fault
        self.fired = False
        self.fired_at = None

    def boundary(self, after_label, engine):
        f = self.fault
        if f is None or self.fired or f.kind != "flip" or f.after_stage != after_label:
            return
        sr = engine.strand(f.rank, f.strand)
        value = sr.state[f.key]
        if isinstance(value, np.ndarray):
            flat = value.view(np.uint64).reshape(-1)
            idx = f.elem % flat.size
            flat[idx] ^= np.uint64(1) << np.uint64(f.bit)
        elif isinstance(value, float):
            bits = struct.unpack("<Q", struct.pack("<d", value))[0]
            sr.state[f.key] = struct.unpack("<d", struct.pack("<Q", bits ^ (1 << f.bit)))[0]
        else:
            sr.state[f.key] = int(value) ^ (1 << f.bit)
        self.fired = True
        self.fired_at = "after %s" % after_label

    def check_rewind(self, rank, sid, stage_label, loop_name, cursor, extent, stage_steps, total_steps):
        f = self.fault
        if f is None or self.fired or f.kind != "rewind":
            return False
        if (
            f.during_stage != stage_label
            or f.rank != rank
            or f.strand != sid
            or f.key != loop_name
        ):
            return False
        if total_steps <= 0:
            return False
        trigger = (total_steps * f.bit) // 64
        if stage_steps < trigger:
            return False
        if loop_name == "inner" and cursor != extent - 1:
            return False
        if cursor == 0:
            return False  # rewinding an unstarted loop is a no-op
        self.fired = True
        self.fired_at = "during %s at step %d" % (stage_label, stage_steps)
        return True


# ---------------------------------------------------------------------------
# Catalog.  Row format:
#   (id, rank, strand, kind, key, elem, window, effect, detect, recovery, rolls)
# window is the label of the completed stage for flips ("after X"), or the
# compute stage for rewinds.  rank 0 is the master; 1..2 are workers.

_ROWS = [
    # --- window after CK0 -------------------------------------------------
    (1, 0, 0, "flip", "A", 777, "CK0", "TDC", "SCATTER", "CK0", 1),
    (2, 0, 1, "flip", "A", 2825, "CK0", "TDC", "SCATTER", "CK0", 1),
    (3, 0, 0, "flip", "B", 131, "CK0", "TDC", "BCAST", "CK0", 2),
    (4, 0, 1, "flip", "B", 1031, "CK0", "TDC", "BCAST", "CK0", 2),
    (5, 0, 0, "flip", "C", 555, "CK0", "LE", None, None, 0),
    (6, 1, 0, "flip", "A", 513, "CK0", "LE", None, None, 0),
    (7, 1, 1, "flip", "B", 222, "CK0", "LE", None, None, 0),
    (8, 2, 1, "flip", "C", 444, "CK0", "LE", None, None, 0),
    # --- window after SCATTER --------------------------------------------
    (9, 1, 0, "flip", "A", 313, "SCATTER", "TDC", "GATHER", "CK0", 3),
    (10, 2, 1, "flip", "A", 414, "SCATTER", "TDC", "GATHER", "CK0", 3),
    (11, 0, 0, "flip", "B", 131, "SCATTER", "TDC", "BCAST", "CK0", 2),
    (12, 0, 1, "flip", "B", 1031, "SCATTER", "TDC", "BCAST", "CK0", 2),
    (13, 0, 1, "flip", "A", 99, "SCATTER", "LE", None, None, 0),
    (14, 0, 0, "flip", "C", 100, "SCATTER", "LE", None, None, 0),
    (15, 1, 1, "flip", "B", 200, "SCATTER", "LE", None, None, 0),
    (16, 2, 0, "flip", "C", 300, "SCATTER", "LE", None, None, 0),
    # --- window after CK1 -------------------------------------------------
    (17, 0, 0, "flip", "B", 131, "CK1", "TDC", "BCAST", "CK1", 1),
    (18, 0, 1, "flip", "B", 1031, "CK1", "TDC", "BCAST", "CK1", 1),
    (19, 1, 0, "flip", "A", 313, "CK1", "TDC", "GATHER", "CK1", 2),
    (20, 2, 1, "flip", "A", 414, "CK1", "TDC", "GATHER", "CK1", 2),
    (21, 0, 1, "flip", "A", 99, "CK1", "LE", None, None, 0),
    (22, 0, 0, "flip", "C", 100, "CK1", "LE", None, None, 0),
    (23, 1, 1, "flip", "C", 300, "CK1", "LE", None, None, 0),
    (24, 2, 0, "flip", "B", 200, "CK1", "LE", None, None, 0),
    # --- window after BCAST -----------------------------------------------
    (25, 1, 0, "flip", "A", 313, "BCAST", "TDC", "GATHER", "CK1", 2),
    (26, 1, 1, "flip", "B", 717, "BCAST", "TDC", "GATHER", "CK1", 2),
    (27, 2, 0, "flip", "A", 414, "BCAST", "TDC", "GATHER", "CK1", 2),
    (28, 2, 1, "flip", "B", 818, "BCAST", "TDC", "GATHER", "CK1", 2),
    (29, 1, 0, "flip", "C", 300, "BCAST", "LE", None, None, 0),
    (30, 2, 1, "flip", "C", 444, "BCAST", "LE", None, None, 0),
    (31, 0, 0, "flip", "B", 131, "BCAST", "LE", None, None, 0),
    (32, 0, 1, "flip", "A", 99, "BCAST", "LE", None, None, 0),
    # --- window after CK2 -------------------------------------------------
    (33, 1, 0, "flip", "A", 313, "CK2", "TDC", "GATHER", "CK2", 1),
    (34, 1, 1, "flip", "B", 717, "CK2", "TDC", "GATHER", "CK2", 1),
    (35, 2, 0, "flip", "A", 414, "CK2", "TDC", "GATHER", "CK2", 1),
    (36, 2, 1, "flip", "B", 818, "CK2", "TDC", "GATHER", "CK2", 1),
    (37, 1, 0, "flip", "C", 300, "CK2", "LE", None, None, 0),
    (38, 2, 1, "flip", "C", 444, "CK2", "LE", None, None, 0),
    (39, 0, 0, "flip", "C", 100, "CK2", "LE", None, None, 0),
    (40, 0, 1, "flip", "B", 131, "CK2", "LE", None, None, 0),
    # --- window after MATMUL ----------------------------------------------
    (41, 1, 0, "flip", "C", 321, "MATMUL", "TDC", "GATHER", "CK2", 1),
    (42, 1, 1, "flip", "C", 1234, "MATMUL", "TDC", "GATHER", "CK2", 1),
    (43, 2, 0, "flip", "C", 321, "MATMUL", "TDC", "GATHER", "CK2", 1),
    (44, 2, 1, "flip", "C", 1234, "MATMUL", "TDC", "GATHER", "CK2", 1),
    (45, 1, 0, "flip", "A", 513, "MATMUL", "LE", None, None, 0),
    (46, 2, 1, "flip", "B", 222, "MATMUL", "LE", None, None, 0),
    (47, 0, 0, "flip", "A", 99, "MATMUL", "LE", None, None, 0),
    (48, 0, 1, "flip", "C", 4000, "MATMUL", "LE", None, None, 0),
    # --- window after GATHER ----------------------------------------------
    (49, 0, 0, "flip", "C", 2222, "GATHER", "FSC", "VALIDATE", "CK2", 2),
    (50, 0, 1, "flip", "C", 3333, "GATHER", "FSC", "VALIDATE", "CK2", 2),
    (51, 0, 0, "flip", "A", 99, "GATHER", "LE", None, None, 0),
    (52, 0, 1, "flip", "B", 131, "GATHER", "LE", None, None, 0),
    (53, 1, 0, "flip", "A", 513, "GATHER", "LE", None, None, 0),
    (54, 1, 1, "flip", "C", 300, "GATHER", "LE", None, None, 0),
    (55, 2, 0, "flip", "B", 222, "GATHER", "LE", None, None, 0),
    (56, 2, 1, "flip", "C", 444, "GATHER", "LE", None, None, 0),
    # --- window after CK3 -------------------------------------------------
    (57, 0, 0, "flip", "C", 2222, "CK3", "FSC", "VALIDATE", "CK3", 1),
    (58, 0, 1, "flip", "C", 3333, "CK3", "FSC", "VALIDATE", "CK3", 1),
    # --- index rewinds during MATMUL --------------------------------------
    (59, 1, 0, "rewind", "outer", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
    (60, 2, 1, "rewind", "outer", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
    (61, 1, 1, "rewind", "inner", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
    (62, 2, 0, "rewind", "inner", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
    (63, 1, 1, "rewind", "outer", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
    (64, 2, 0, "rewind", "outer", 0, "MATMUL", "TOE", "GATHER", "CK2", 1),
]

_LATE_REWINDS = {63, 64}  # trigger at 7/8 instead of 3/4


def catalog():
    """All 64 scenarios as (FaultSpec, frozen ScenarioPrediction) pairs."""
    out = []
    for row in _ROWS:
        sid, rank, strand, kind, key, elem, window, effect, detect, recovery, rolls = row
        if kind == "flip":
            spec = FaultSpec(
                scenario=sid,
                rank=rank,
                strand=strand,
                kind="flip",
                key=key,
                elem=elem,
                bit=_FLIP_BITS[sid % len(_FLIP_BITS)],
                after_stage=window,
            )
        else:
            spec = FaultSpec(
                scenario=sid,
                rank=rank,
                strand=strand,
                kind="rewind",
                key=key,
                bit=56 if sid in _LATE_REWINDS else 48,
                during_stage=window,
            )
        out.append((spec, ScenarioPrediction(effect, detect, recovery, rolls)))
    return out


def scenario(sid):
    for spec, pred in catalog():
        if spec.scenario == sid:
            return spec, pred
    raise KeyError("no scenario %d" % sid)


# ---------------------------------------------------------------------------
# Structural oracle: derive the prediction from the data lifecycle.
#
# Lifecycle of each (role, key) over the stage line.  Actions:
#   "overwrite"  the value is replaced wholesale (corruption erased)
#   "transmit"   the value is sent under validation (corruption caught)
#   "consume"    the value feeds the worker result block
#   "validate"   the value is digest-compared at final validation

_LIFECYCLE = {
    ("master", "A"): [("SCATTER", "transmit")],
    ("master", "B"): [("BCAST", "transmit")],
    ("master", "C"): [("GATHER", "overwrite"), ("VALIDATE", "validate")],
    ("worker", "A"): [("SCATTER", "overwrite"), ("MATMUL", "consume")],
    ("worker", "B"): [("BCAST", "overwrite"), ("MATMUL", "consume")],
    ("worker", "C"): [("MATMUL", "overwrite"), ("GATHER", "transmit")],
}


def predict(spec: FaultSpec) -> ScenarioPrediction:
    """Predicted observable outcome under the conformance configuration
    (system strategy, interleaved mode)."""
    if spec.kind == "rewind":
        # transient: one-shot, no state corruption survives the rollback
        detect_idx = _IDX["GATHER"]
        return ScenarioPrediction("TOE", "GATHER", *_recover(detect_idx, _IDX["MATMUL"]))

    role = "master" if spec.rank == 0 else "worker"
    w = _IDX[spec.after_stage]
    events = [(_IDX[s], act) for s, act in _LIFECYCLE[(role, spec.key)]]
    nxt = next(((i, act) for i, act in events if i > w), None)
    if nxt is None:
        return ScenarioPrediction("LE", None, None, 0)
    idx, act = nxt
    if act == "overwrite":
        return ScenarioPrediction("LE", None, None, 0)
    if act == "consume":
        # taint flows into the worker's result block; follow its lifecycle
        c_events = [(_IDX[s], a) for s, a in _LIFECYCLE[("worker", "C")]]
        idx, act = next((i, a) for i, a in c_events if i > idx - 1 and a == "transmit")
        recovery, rolls = _recover(idx, w)
        return ScenarioPrediction("TDC", _STAGES[idx], recovery, rolls)
    if act == "transmit":
        recovery, rolls = _recover(idx, w)
        return ScenarioPrediction("TDC", _STAGES[idx], recovery, rolls)
    recovery, rolls = _recover(idx, w)
    return ScenarioPrediction("FSC", _STAGES[idx], recovery, rolls)


def _recover(detect_idx, corrupt_from_idx):
    """Multi-rollback arithmetic: walk back one slot per re-detection
    until the restored image predates the corruption."""
    taken = [(label, i) for label, i in _CKPTS if i < detect_idx]
    count = len(taken)
    extern = 0
    while True:
        extern += 1
        slot = count - extern
        if slot < 0:
            return None, extern  # relaunch from the beginning
        label, idx = _CKPTS[slot]
        if idx <= corrupt_from_idx:
            return label, extern
