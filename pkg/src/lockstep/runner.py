"""Run driver: pass loop, recovery policy, and the run directory.

A run executes passes until one completes cleanly.  On a detection the
next pass starts from a restored checkpoint according to the strategy:

  system      multi-rollback.  An external counter (never reset by a
              restore) is incremented per detection and the slot
              `count - counter` is restored, where `count` is the number
              of slots on disk.  Dirty slots re-manifest their fault and
              push the walk one slot further back; a negative slot index
              relaunches from the beginning.
  application single rollback.  The one validated image is restored; if
              none exists yet the run relaunches from the beginning.
  none        halt on first detection (exit code 2).

The run directory holds the checkpoint slots plus:

  events.jsonl  one line per detection: pass index + event fields
  ledger.json   {"injected", "failures", "extern_counter"}
  result.json   outcome, exit code, restarts, digests, summary
  timings.json  wall-clock measurements

Wall time lives in its own file so that result.json and events.jsonl
are byte-identical across runs with the same config and seed in
interleaved mode.
"""

import json
import os
import re
import tempfile
import time

from .apps import make_app
from .checkpoint import CheckpointStore
from .encoding import decode_tree
from .engine import Engine, ThreadedEngine
from .faults import Injector
from .types import (
    EngineError,
    Mode,
    RunLedger,
    RunOutcome,
    RunReport,
    Strategy,
)

_RUN_FILES = re.compile(
    r"^(ckpt_(sys|app)_.*\.bin|events\.jsonl|ledger\.json|result\.json|timings\.json|scenarios\.json)$"
)

STRATEGY_CLI_NAMES = {
    Strategy.NONE: "detect",
    Strategy.SYSTEM: "multi-ckpt",
    Strategy.APPLICATION: "single-ckpt",
}


def resolve_out_dir(config):
    out = config.out_dir or os.environ.get("LOCKSTEP_OUT")
    if out is None:
        out = tempfile.mkdtemp(prefix="lockstep-")
    return out


def _clean_run_dir(path):
    os.makedirs(path, exist_ok=True)
    for name in os.listdir(path):
        if _RUN_FILES.match(name):
            os.unlink(os.path.join(path, name))


def _build_engine(app, config, injector, store, resume):
    states = None
    cursor = 0
    if resume is not None:
        which, payload = resume
        if which == "system":
            stage_ord, pairs = store.load_system(payload)
            states = {}
            for rank, (enc0, enc1) in enumerate(pairs):
                states[(rank, 0)] = decode_tree(bytes(enc0))
                states[(rank, 1)] = decode_tree(bytes(enc1))
        else:
            _, stage_ord, payloads = payload
            states = {}
            for rank, (enc, _) in enumerate(payloads):
                states[(rank, 0)] = decode_tree(bytes(enc))
                states[(rank, 1)] = decode_tree(bytes(enc))
        cursor = stage_ord + 1
    cls = ThreadedEngine if config.mode == Mode.THREADED else Engine
    return cls(app, config, injector, store, states=states, cursor=cursor)


def run(config, injector=None, trace_deliveries=None):
    """Execute a full run.  Returns a RunReport.

    An explicit `injector` overrides the one built from config.fault
    (used by tests to install synthetic hooks).  `trace_deliveries`, if
    a list, collects every delivered envelope for containment audits.
    """
    app = make_app(config)
    out_dir = resolve_out_dir(config)
    _clean_run_dir(out_dir)
    store = None if config.strategy == Strategy.NONE else CheckpointStore(out_dir)
    if injector is None:
        injector = Injector(config.fault)
    ledger = RunLedger()
    events = []
    resume = None
    restarts = 0
    relaunched = False
    last_restore = None
    stages = app.stages()
    max_failures = 2 * len(stages) + 8
    t0 = time.monotonic()
    while True:
        engine = _build_engine(app, config, injector, store, resume)
        if trace_deliveries is not None and config.mode == Mode.INTERLEAVED:
            engine.trace_deliveries = trace_deliveries
        ev = engine.run_pass()
        ledger.injected = bool(injector.fired)
        if ev is None:
            outcome = RunOutcome.COMPLETED_VALID if ledger.failures == 0 else RunOutcome.RECOVERED
            exit_code = 0
            break
        events.append(ev)
        ledger.failures += 1
        _append_event(out_dir, ledger.failures, ev)
        _write_ledger(out_dir, ledger)
        if config.strategy == Strategy.NONE:
            outcome = RunOutcome.HALTED_ON_DETECTION
            exit_code = 2
            break
        if ledger.failures > max_failures:
            raise EngineError("run did not converge after %d failures" % ledger.failures)
        ledger.extern_counter += 1
        if config.strategy == Strategy.SYSTEM:
            slot = store.system_count() - ledger.extern_counter
            if slot < 0:
                resume = None
                relaunched = True
                last_restore = None
            else:
                resume = ("system", slot)
                stage_ord, _ = store.load_system(slot)
                last_restore = stages[stage_ord].label
        else:
            img = store.load_application()
            if img is None:
                resume = None
                relaunched = True
                last_restore = None
            else:
                resume = ("application", img)
                last_restore = stages[img[1]].label
        restarts += 1
        _write_ledger(out_dir, ledger)
    wall = time.monotonic() - t0
    report = RunReport(
        outcome=outcome,
        exit_code=exit_code,
        events=events,
        restarts=restarts,
        result_digests=dict(engine.result_digests),
        result=app.summarize(engine) if ev is None else {},
        wall_s=wall,
        run_dir=out_dir,
        recovery_point=last_restore,
        relaunched=relaunched,
        ledger=ledger,
    )
    _write_ledger(out_dir, ledger)
    _write_result(out_dir, config, report)
    return report


def _append_event(out_dir, pass_no, ev):
    line = {"pass": pass_no}
    line.update(ev.to_json())
    with open(os.path.join(out_dir, "events.jsonl"), "a") as f:
        f.write(json.dumps(line) + "\n")


def _write_ledger(out_dir, ledger):
    with open(os.path.join(out_dir, "ledger.json"), "w") as f:
        json.dump(ledger.to_json(), f, indent=2)
        f.write("\n")


def _write_result(out_dir, config, report):
    doc = {
        "app": config.app,
        "size": config.size,
        "ranks": config.ranks,
        "strategy": STRATEGY_CLI_NAMES[config.strategy],
        "mode": config.mode.value,
        "seed": config.seed,
        "outcome": report.outcome.value,
        "exit_code": report.exit_code,
        "restarts": report.restarts,
        "relaunched": report.relaunched,
        "recovery_point": report.recovery_point,
        "events": [e.to_json() for e in report.events],
        "result_digests": report.result_digests,
        "summary": report.result,
    }
    with open(os.path.join(out_dir, "result.json"), "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    with open(os.path.join(out_dir, "timings.json"), "w") as f:
        json.dump({"wall_s": round(report.wall_s, 6), "passes": report.restarts + 1}, f, indent=2)
        f.write("\n")
