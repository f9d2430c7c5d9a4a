"""Replicated dual-strand execution engine.

Every logical rank runs two strands (0 and 1) executing the same program
over private copies of the same state.  Detection is by comparison:

  - validated sends: the two sender strands rendezvous at each send and
    their payload digests must agree before anything is delivered;
  - timeout budgets: once one strand of a pair arrives at a rendezvous,
    its peer is granted `step_budget` further compute steps; exceeding
    the budget is a detection in itself;
  - final validation: at the VALIDATE stage the strands' digests of the
    app-declared result subtree must agree.

Receivers copy on receive, so a later corruption of one strand's copy
never aliases the other strand or the sender.

Two drive modes share the app protocol.  INTERLEAVED steps all strand
generators round-robin under a seed-shuffled order, counting steps, so
a run is a pure function of (app, config, fault).  THREADED runs each
strand on a real thread with barrier rendezvous and wall-clock timeouts
in place of step budgets.

App protocol: an app exposes `stages()` and, per stage, a generator per
(rank, strand) yielding scheduling tokens:

    yield ctx.step()                  one compute step
    yield ctx.send(dst, tag, arr)     validated send
    arr = yield ctx.recv(src, tag)    blocking receive (private copy)

Checkpoint and validate stages have no generators; the engine performs
them.  Messages never cross stage boundaries: every envelope must be
consumed by both receiver strands before the stage ends.
"""

import random
import threading
import time

import numpy as np

from .encoding import encode_tree
from .kernels import fast_digest
from .types import (
    DetectionEvent,
    DetectionKind,
    EngineError,
    Stage,
    StageKind,
    Strategy,
)


def digest_state(tree: dict) -> int:
    return fast_digest(encode_tree(tree))


def digest_payload(src: int, dst: int, tag: str, arr) -> int:
    return fast_digest(encode_tree({"src": src, "dst": dst, "tag": tag, "data": arr}))


def copy_state(tree: dict) -> dict:
    out = {}
    for k, v in tree.items():
        if isinstance(v, np.ndarray):
            out[k] = v.copy()
        elif isinstance(v, dict):
            out[k] = copy_state(v)
        else:
            out[k] = v
    return out


class NullInjector:
    fired = False

    def boundary(self, after_label, engine):
        pass

    def check_rewind(self, rank, sid, stage_label, loop_name, cursor, extent, stage_steps, total_steps):
        return False


class StrandCtx:
    """Token helpers bound to one strand within one stage."""

    def __init__(self, engine, rank, sid, stage):
        self.engine = engine
        self.rank = rank
        self.sid = sid
        self.stage = stage
        self.total_steps = 0

    def step(self):
        return ("step",)

    def send(self, dst, tag, arr):
        return ("send", dst, tag, arr)

    def recv(self, src, tag):
        return ("recv", src, tag)

    def declare_steps(self, total):
        # lets rewind faults place their trigger as a fraction of the stage
        self.total_steps = total

    def loop(self, name, extent):
        i = 0
        while i < extent:
            strand = self.engine.strand(self.rank, self.sid)
            if self.engine.injector.check_rewind(
                self.rank,
                self.sid,
                self.stage.label,
                name,
                i,
                extent,
                strand.stage_steps,
                self.total_steps,
            ):
                i = 0
                continue
            yield i
            i += 1


class _Strand:
    __slots__ = (
        "rank",
        "sid",
        "state",
        "gen",
        "exited",
        "inbox",
        "parked_send",
        "parked_recv",
        "send_seq",
        "stage_steps",
        "overrun",
        "consumed",
    )

    def __init__(self, rank, sid, state):
        self.rank = rank
        self.sid = sid
        self.state = state
        self.reset_stage()

    def reset_stage(self):
        self.gen = None
        self.exited = True
        self.inbox = None
        self.parked_send = None  # (seq, dst, tag, arr)
        self.parked_recv = None  # (src, tag)
        self.send_seq = 0
        self.stage_steps = 0
        self.overrun = 0
        self.consumed = set()


class Engine:
    """Drives one execution pass from a stage cursor to completion."""

    def __init__(self, app, config, injector=None, store=None, states=None, cursor=0):
        self.app = app
        self.config = config
        self.injector = injector if injector is not None else NullInjector()
        self.store = store
        self.stages = app.stages()
        self.cursor = cursor
        self.nranks = app.nranks
        self.global_step = 0
        self.result_digests = {}
        self.trace_deliveries = None  # optional containment trace
        if states is None:
            states = {}
            for rank in range(self.nranks):
                base = app.init_state(rank)
                states[(rank, 0)] = base
                states[(rank, 1)] = copy_state(base)
        self.strands = {
            (rank, sid): _Strand(rank, sid, states[(rank, sid)])
            for rank in range(self.nranks)
            for sid in (0, 1)
        }
        self.network = {}

    def strand(self, rank, sid):
        return self.strands[(rank, sid)]

    def states_of(self, rank):
        return self.strand(rank, 0).state, self.strand(rank, 1).state

    # -- pass driver --------------------------------------------------------

    def run_pass(self):
        """Returns None on completion or the first DetectionEvent."""
        for idx in range(self.cursor, len(self.stages)):
            stage = self.stages[idx]
            if idx > 0:
                self.injector.boundary(self.stages[idx - 1].label, self)
            if stage.kind == StageKind.CHECKPOINT:
                ev = self._run_checkpoint(stage, idx)
            elif stage.kind == StageKind.VALIDATE:
                ev = self._run_validate(stage)
            else:
                ev = self._run_stage(stage, idx)
            if ev is not None:
                return ev
        return None

    # -- engine-performed stages -------------------------------------------

    def _run_checkpoint(self, stage, idx):
        strategy = self.config.strategy
        if strategy == Strategy.NONE or self.store is None:
            return None
        if strategy == Strategy.SYSTEM:
            pairs = []
            for rank in range(self.nranks):
                s0, s1 = self.states_of(rank)
                pairs.append((encode_tree(s0), encode_tree(s1)))
            self.store.write_system(stage.seq, idx, pairs)
            return None
        # application strategy: both strands snapshot, digests must agree
        # before the image replaces the previous one
        payloads = []
        for rank in range(self.nranks):
            s0, s1 = self.states_of(rank)
            enc0 = encode_tree(s0)
            enc1 = encode_tree(s1)
            d0 = fast_digest(enc0)
            d1 = fast_digest(enc1)
            if d0 != d1:
                return DetectionEvent(
                    kind=DetectionKind.SDC_MISMATCH,
                    rank=rank,
                    stage=stage.label,
                    step=self.global_step,
                    detail="checkpoint snapshot digests differ: %016x != %016x" % (d0, d1),
                )
            payloads.append((enc0, d0))
        self.store.write_application(stage.seq, idx, payloads)
        return None

    def _run_validate(self, stage):
        for rank in range(self.nranks):
            keys = self.app.result_keys(rank)
            s0, s1 = self.states_of(rank)
            sub0 = {k: s0[k] for k in keys}
            sub1 = {k: s1[k] for k in keys}
            d0 = digest_state(sub0)
            d1 = digest_state(sub1)
            if d0 != d1:
                return DetectionEvent(
                    kind=DetectionKind.FINAL_MISMATCH,
                    rank=rank,
                    stage=stage.label,
                    step=self.global_step,
                    detail="result digests differ: %016x != %016x" % (d0, d1),
                )
            self.result_digests[rank] = "%016x" % d0
        return None

    # -- interleaved scheduler ---------------------------------------------

    def _build_stage(self, stage, idx):
        runs = []
        for rank in range(self.nranks):
            for sid in (0, 1):
                sr = self.strand(rank, sid)
                sr.reset_stage()
                ctx = StrandCtx(self, rank, sid, stage)
                gen = self.app.stage_gen(stage, ctx, rank, sid, sr.state)
                if gen is not None:
                    sr.gen = gen
                    sr.exited = False
                runs.append(sr)
        order = list(range(len(runs)))
        rng = random.Random((self.config.seed << 20) ^ (idx * 0x9E3779B1))
        rng.shuffle(order)
        return runs, order

    def _run_stage(self, stage, idx):
        runs, order = self._build_stage(stage, idx)
        pending = sum(0 if sr.exited else 1 for sr in runs)
        while pending:
            progressed = False
            for oi in order:
                sr = runs[oi]
                if sr.exited:
                    continue
                status = self._visit(sr, stage, idx)
                if isinstance(status, DetectionEvent):
                    return status
                if status:
                    progressed = True
                if sr.exited:
                    pending -= 1
            if not pending:
                break
            if not progressed:
                raise EngineError(
                    "no runnable strand in stage %s (messages missing or pair deadlock)" % stage.label
                )
        ev = self._end_stage_checks(stage)
        return ev

    def _visit(self, sr, stage, idx):
        """Advance one strand by one token if it is runnable.

        Returns True on progress, False if parked, or a DetectionEvent.
        """
        if sr.parked_send is not None:
            return False  # waiting for its pair at a send rendezvous
        if sr.parked_recv is not None:
            src, tag = sr.parked_recv
            key = (src, sr.rank, tag)
            entry = self.network.get(key)
            if entry is None:
                return False
            sr.inbox = entry[0].copy()
            entry[1].add(sr.sid)
            sr.consumed.add(key)
            sr.parked_recv = None
            # fall through and advance with the delivered value
        try:
            token = sr.gen.send(sr.inbox)
        except StopIteration:
            sr.inbox = None
            sr.exited = True
            sr.overrun = 0
            return True
        sr.inbox = None
        kind = token[0]
        if kind == "step":
            sr.stage_steps += 1
            self.global_step += 1
            return self._note_step(sr, stage, idx)
        if kind == "send":
            _, dst, tag, arr = token
            seq = sr.send_seq
            sr.send_seq += 1
            sr.parked_send = (seq, dst, tag, arr)
            sr.overrun = 0
            return self._try_send_rendezvous(sr, stage)
        if kind == "recv":
            _, src, tag = token
            sr.parked_recv = (src, tag)
            return True
        raise EngineError("unknown token %r from %s" % (kind, stage.label))

    def _note_step(self, sr, stage, idx):
        """Step bookkeeping: budget enforcement for a waiting pair."""
        peer = self.strand(sr.rank, 1 - sr.sid)
        waiting = False
        at_label = stage.label
        if peer.parked_send is not None and peer.parked_send[0] >= sr.send_seq:
            waiting = True
        elif peer.exited and not sr.exited:
            waiting = True
            if idx + 1 < len(self.stages):
                at_label = self.stages[idx + 1].label
        if not waiting:
            sr.overrun = 0
            return True
        sr.overrun += 1
        if sr.overrun > self.config.step_budget:
            return DetectionEvent(
                kind=DetectionKind.TOE_TIMEOUT,
                rank=sr.rank,
                stage=at_label,
                step=self.global_step,
                detail="strand %d exceeded step budget %d (deficit %d)"
                % (sr.sid, self.config.step_budget, sr.overrun),
            )
        return True

    def _try_send_rendezvous(self, sr, stage):
        peer = self.strand(sr.rank, 1 - sr.sid)
        if peer.parked_send is None or peer.parked_send[0] != sr.parked_send[0]:
            return True  # first to arrive; peer budget runs from here
        seq0, dst0, tag0, arr0 = sr.parked_send if sr.sid == 0 else peer.parked_send
        seq1, dst1, tag1, arr1 = peer.parked_send if sr.sid == 0 else sr.parked_send
        if (dst0, tag0) != (dst1, tag1):
            raise EngineError(
                "strand programs diverged: send %s!=%s at %s" % ((dst0, tag0), (dst1, tag1), stage.label)
            )
        d0 = digest_payload(sr.rank, dst0, tag0, arr0)
        d1 = digest_payload(sr.rank, dst1, tag1, arr1)
        if d0 != d1:
            return DetectionEvent(
                kind=DetectionKind.SDC_MISMATCH,
                rank=sr.rank,
                stage=stage.label,
                step=self.global_step,
                detail="send '%s' to %d digests differ: %016x != %016x" % (tag0, dst0, d0, d1),
            )
        self._deliver(sr.rank, dst0, tag0, arr0, d0, stage)
        sr.parked_send = None
        peer.parked_send = None
        sr.overrun = 0
        peer.overrun = 0
        return True

    def _deliver(self, src, dst, tag, arr, digest, stage):
        key = (src, dst, tag)
        if key in self.network:
            raise EngineError("duplicate message %r in stage %s" % (key, stage.label))
        self.network[key] = (arr.copy(), set())
        if self.trace_deliveries is not None:
            self.trace_deliveries.append(
                {"src": src, "dst": dst, "tag": tag, "stage": stage.label, "digest": "%016x" % digest}
            )

    def _end_stage_checks(self, stage):
        for (src, dst, tag), (_, consumed) in self.network.items():
            if consumed != {0, 1}:
                raise EngineError(
                    "message %r from %d to %d not consumed by both strands in stage %s"
                    % (tag, src, dst, stage.label)
                )
        self.network.clear()
        return None


# ---------------------------------------------------------------------------
# Threaded drive mode


class _Aborted(Exception):
    pass


class _PairGate:
    """Send rendezvous between the two strands of one rank (threaded)."""

    def __init__(self):
        self.lock = threading.Lock()
        self.slots = {}

    def exchange(self, seq, sid, value, timeout, abort):
        with self.lock:
            slot = self.slots.setdefault(seq, {"event": threading.Event(), "vals": {}})
            slot["vals"][sid] = value
        if len(slot["vals"]) == 2:
            slot["event"].set()
        else:
            deadline = time.monotonic() + timeout
            while not slot["event"].wait(0.01):
                if abort.is_set():
                    raise _Aborted()
                if time.monotonic() > deadline:
                    return None
        return slot["vals"]


class ThreadedEngine:
    """Wall-clock variant: one OS thread per strand, barrier rendezvous.

    Step budgets are replaced by `wall_timeout_s` since preemptive
    scheduling makes step counting meaningless across threads.  Rewind
    faults are not supported here; boundary flips are applied by the
    coordinator between stages while all strands are parked.
    """

    def __init__(self, app, config, injector=None, store=None, states=None, cursor=0):
        self.inner = Engine(app, config, injector, store, states, cursor)
        self.app = app
        self.config = config
        self.abort = threading.Event()
        self.first_event = None
        self.thread_error = None
        self.event_lock = threading.Lock()
        self.network = {}
        self.net_lock = threading.Condition()
        self.gates = {}

    def _record(self, ev):
        with self.event_lock:
            if self.first_event is None:
                self.first_event = ev
        self.abort.set()

    def _strand_main(self, stage, sr, ctx, barrier):
        eng = self.inner
        try:
            gen = self.app.stage_gen(stage, ctx, sr.rank, sr.sid, sr.state)
            if gen is not None:
                inbox = None
                while True:
                    if self.abort.is_set():
                        raise _Aborted()
                    try:
                        token = gen.send(inbox)
                    except StopIteration:
                        break
                    inbox = None
                    kind = token[0]
                    if kind == "step":
                        sr.stage_steps += 1
                        continue
                    if kind == "send":
                        _, dst, tag, arr = token
                        seq = sr.send_seq
                        sr.send_seq += 1
                        gate = self.gates[(sr.rank, stage.label)]
                        d = digest_payload(sr.rank, dst, tag, arr)
                        vals = gate.exchange(seq, sr.sid, (dst, tag, arr, d), self.config.wall_timeout_s, self.abort)
                        if vals is None:
                            self._record(
                                DetectionEvent(
                                    kind=DetectionKind.TOE_TIMEOUT,
                                    rank=sr.rank,
                                    stage=stage.label,
                                    step=0,
                                    detail="strand %d waited past %.1fs at send '%s'"
                                    % (sr.sid, self.config.wall_timeout_s, tag),
                                )
                            )
                            raise _Aborted()
                        if sr.sid == 0:
                            (dst0, tag0, arr0, d0) = vals[0]
                            (_, _, _, d1) = vals[1]
                            if d0 != d1:
                                self._record(
                                    DetectionEvent(
                                        kind=DetectionKind.SDC_MISMATCH,
                                        rank=sr.rank,
                                        stage=stage.label,
                                        step=0,
                                        detail="send '%s' to %d digests differ: %016x != %016x"
                                        % (tag0, dst0, d0, d1),
                                    )
                                )
                                raise _Aborted()
                            with self.net_lock:
                                self.network[(sr.rank, dst0, tag0)] = (arr0.copy(), set())
                                self.net_lock.notify_all()
                        continue
                    if kind == "recv":
                        _, src, tag = token
                        key = (src, sr.rank, tag)
                        deadline = time.monotonic() + self.config.wall_timeout_s
                        with self.net_lock:
                            while key not in self.network:
                                if self.abort.is_set():
                                    raise _Aborted()
                                if time.monotonic() > deadline:
                                    raise EngineError("recv %r starved in stage %s" % (key, stage.label))
                                self.net_lock.wait(0.01)
                            entry = self.network[key]
                            inbox = entry[0].copy()
                            entry[1].add(sr.sid)
                        continue
                    raise EngineError("unknown token %r" % kind)
            barrier.wait(timeout=self.config.wall_timeout_s * 4)
        except _Aborted:
            pass
        except threading.BrokenBarrierError:
            pass
        except Exception as exc:  # app/engine bug: fail the pass loudly
            with self.event_lock:
                if self.thread_error is None:
                    self.thread_error = exc
            self.abort.set()

    def run_pass(self):
        eng = self.inner
        for idx in range(eng.cursor, len(eng.stages)):
            stage = eng.stages[idx]
            if idx > 0:
                eng.injector.boundary(eng.stages[idx - 1].label, eng)
            if stage.kind == StageKind.CHECKPOINT:
                ev = eng._run_checkpoint(stage, idx)
            elif stage.kind == StageKind.VALIDATE:
                ev = eng._run_validate(stage)
            else:
                ev = self._run_stage_threaded(stage, idx)
            if ev is not None:
                return ev
        return None

    def _run_stage_threaded(self, stage, idx):
        eng = self.inner
        self.network.clear()
        self.gates = {(rank, stage.label): _PairGate() for rank in range(eng.nranks)}
        self.abort.clear()
        self.first_event = None
        strands = []
        for rank in range(eng.nranks):
            for sid in (0, 1):
                sr = eng.strand(rank, sid)
                sr.reset_stage()
                sr.exited = False
                strands.append(sr)
        barrier = threading.Barrier(len(strands) + 1)
        threads = []
        for sr in strands:
            ctx = StrandCtx(eng, sr.rank, sr.sid, stage)
            t = threading.Thread(target=self._strand_main, args=(stage, sr, ctx, barrier), daemon=True)
            threads.append(t)
            t.start()
        try:
            barrier.wait(timeout=self.config.wall_timeout_s * 8)
        except threading.BrokenBarrierError:
            pass
        for t in threads:
            t.join(timeout=self.config.wall_timeout_s * 8)
        if self.thread_error is not None:
            raise EngineError("strand thread failed in %s: %r" % (stage.label, self.thread_error))
        if self.first_event is not None:
            return self.first_event
        for key, (arr, consumed) in self.network.items():
            if consumed != {0, 1}:
                raise EngineError("message %r not consumed by both strands" % (key,))
        return None

    @property
    def result_digests(self):
        return self.inner.result_digests

    def states_of(self, rank):
        return self.inner.states_of(rank)

    @property
    def global_step(self):
        return self.inner.global_step
