"""Command-line front end.

Subcommands:

  run          execute one run (optionally with a catalog scenario)
  conformance  sweep the scenario catalog and compare with predictions
  model        evaluate the execution-time model, emit CSV tables
  report       summarize a run or sweep directory

Exit codes: 0 for a valid completion or successful recovery, 2 when a
detection-only run halts on a fault (that halt is correct behavior,
reported distinctly), 64 for usage errors, 65 for config/schema errors.

A JSON config file passed with --config overrides the corresponding
flags.  The out-dir default comes from LOCKSTEP_OUT when neither flag
nor file supplies one.
"""

import argparse
import json
import os
import sys
import time

from . import costmodel as cm
from .conformance import run_conformance
from .encoding import digest_tree
from .faults import scenario as catalog_scenario
from .runner import STRATEGY_CLI_NAMES, resolve_out_dir, run
from .types import ConfigError, Mode, RunConfig, Strategy

EXIT_OK = 0
EXIT_HALTED = 2
EXIT_USAGE = 64
EXIT_CONFIG = 65

_STRATEGIES = {name: s for s, name in STRATEGY_CLI_NAMES.items()}

_MTBE_CURVE_H = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        raise SystemExit(EXIT_USAGE)


def _build_parser():
    p = _Parser(prog="lockstep", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute one run")
    r.add_argument("--app", choices=("matmul", "jacobi", "sw"), default="matmul")
    r.add_argument("--size", type=int, default=64)
    r.add_argument("--ranks", type=int, default=3)
    r.add_argument("--iters", type=int, default=50, help="iteration count (jacobi)")
    r.add_argument(
        "--strategy",
        choices=("baseline-dual", "detect", "multi-ckpt", "single-ckpt"),
        default="multi-ckpt",
    )
    r.add_argument("--mode", choices=("interleaved", "threaded"), default="interleaved")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--step-budget", type=int, default=8)
    r.add_argument("--wall-timeout", type=float, default=5.0)
    r.add_argument("--ckpt-every", type=int, default=0)
    r.add_argument("--scenario", type=int, default=None, help="catalog scenario id (1..64)")
    r.add_argument("--out", default=None)
    r.add_argument("--config", default=None, help="JSON config file; overrides flags")

    c = sub.add_parser("conformance", help="sweep the scenario catalog")
    c.add_argument("--out", default=None)
    c.add_argument("--size", type=int, default=64)
    c.add_argument("--ranks", type=int, default=3)
    c.add_argument("--seed", type=int, default=11)
    c.add_argument(
        "--strategy",
        choices=("multi-ckpt", "detect", "both"),
        default="both",
    )

    m = sub.add_parser("model", help="evaluate the execution-time model")
    m.add_argument("--params", default=None, help="JSON params file (defaults to packaged data)")
    m.add_argument("--out", default=None, help="directory for CSV outputs")
    m.add_argument("--json", action="store_true", help="print full JSON to stdout")

    g = sub.add_parser("report", help="summarize a run or sweep directory")
    g.add_argument("--out", default=None)
    return p


# -- run --------------------------------------------------------------------

_CONFIG_KEYS = {
    "app": str,
    "size": int,
    "ranks": int,
    "iters": int,
    "strategy": str,
    "mode": str,
    "seed": int,
    "step_budget": int,
    "wall_timeout": float,
    "ckpt_every": int,
    "scenario": int,
    "out": str,
}


def _apply_config_file(args, path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, ValueError) as exc:
        raise ConfigError("cannot read config file %s: %s" % (path, exc))
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError("unknown config key %r" % key)
        if value is not None and not isinstance(value, (_CONFIG_KEYS[key], int)):
            raise ConfigError("config key %r has wrong type" % key)
        setattr(args, key, value)


def _cmd_run(args):
    if args.config:
        _apply_config_file(args, args.config)
    if args.scenario is not None:
        if args.app != "matmul":
            raise ConfigError("scenarios are defined for the matmul app only")
        if not 1 <= args.scenario <= 64:
            raise ConfigError("scenario id must be in 1..64")
    if args.strategy == "baseline-dual":
        if args.scenario is not None:
            raise ConfigError("baseline-dual runs unreplicated; scenarios do not apply")
        return _run_baseline_dual(args)
    fault = None
    if args.scenario is not None:
        fault, _ = catalog_scenario(args.scenario)
        if args.mode == "threaded" and fault.kind == "rewind":
            raise ConfigError("rewind scenarios need interleaved mode")
    config = RunConfig(
        app=args.app,
        size=args.size,
        ranks=args.ranks,
        iters=args.iters,
        strategy=_STRATEGIES[args.strategy],
        mode=Mode.THREADED if args.mode == "threaded" else Mode.INTERLEAVED,
        seed=args.seed,
        step_budget=args.step_budget,
        wall_timeout_s=args.wall_timeout,
        ckpt_every=args.ckpt_every,
        out_dir=args.out,
        fault=fault,
    )
    report = run(config)
    print("run dir: %s" % report.run_dir)
    print(
        "outcome: %s  restarts: %d  events: %d"
        % (report.outcome.value, report.restarts, len(report.events))
    )
    for ev in report.events:
        print("  %s at %s (rank %d): %s" % (ev.kind.value, ev.stage, ev.rank, ev.detail))
    if report.recovery_point:
        print("recovered from: %s" % report.recovery_point)
    return report.exit_code


def _run_baseline_dual(args):
    """Two unreplicated runs plus a result comparison."""
    from .apps import make_app

    config = RunConfig(
        app=args.app,
        size=args.size,
        ranks=args.ranks,
        iters=args.iters,
        strategy=Strategy.NONE,
        seed=args.seed,
        ckpt_every=args.ckpt_every,
        out_dir=args.out,
    )
    app = make_app(config)
    out_dir = resolve_out_dir(config)
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.monotonic()
    first = app.reference_result()
    t1 = time.monotonic()
    second = app.reference_result()
    t2 = time.monotonic()
    d0 = digest_tree(first)
    d1 = digest_tree(second)
    t3 = time.monotonic()
    match = d0 == d1
    doc = {
        "app": args.app,
        "size": args.size,
        "strategy": "baseline-dual",
        "seed": args.seed,
        "outcome": "COMPLETED_VALID" if match else "HALTED_ON_DETECTION",
        "exit_code": EXIT_OK if match else EXIT_HALTED,
        "result_digests": {"first": "%016x" % d0, "second": "%016x" % d1},
    }
    with open(os.path.join(out_dir, "result.json"), "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    with open(os.path.join(out_dir, "timings.json"), "w") as f:
        json.dump(
            {
                "t_prog_s": [round(t1 - t0, 6), round(t2 - t1, 6)],
                "t_comp_s": round(t3 - t2, 6),
            },
            f,
            indent=2,
        )
        f.write("\n")
    print("run dir: %s" % out_dir)
    print("outcome: %s  digests: %016x %016x" % (doc["outcome"], d0, d1))
    return doc["exit_code"]


# -- conformance ------------------------------------------------------------


def _cmd_conformance(args):
    out = args.out or os.environ.get("LOCKSTEP_OUT")
    if out is None:
        raise ConfigError("conformance needs --out or LOCKSTEP_OUT")
    names = ("multi-ckpt", "detect") if args.strategy == "both" else (args.strategy,)
    doc = run_conformance(out, size=args.size, ranks=args.ranks, seed=args.seed, strategies=names)
    print("sweep dir: %s" % out)
    for name, sweep in doc["sweeps"].items():
        print("%-10s %d/%d passed" % (name, sweep["passed"], sweep["total"]))
        for row in sweep["rows"]:
            if not row["ok"]:
                print(
                    "  FAIL s%02d predicted %s observed %s"
                    % (row["scenario"], row["predicted"], row["observed"])
                )
    print("total: %d/%d passed in %.1fs" % (doc["passed"], doc["total"], doc["wall_s"]))
    return EXIT_OK


# -- model ------------------------------------------------------------------

_WORKLOAD_FIELDS = (
    "t_prog_h",
    "t_comp_s",
    "f_d",
    "n_ckpt",
    "t_cs_s",
    "t_rest_s",
    "t_ca_s",
    "t_comp_app_s",
)


def _load_params(path):
    if path is None:
        return cm.load_data(), True
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, ValueError) as exc:
        raise ConfigError("cannot read params file %s: %s" % (path, exc))
    if not isinstance(doc, dict) or not isinstance(doc.get("workloads"), dict) or not doc["workloads"]:
        raise ConfigError("params file needs a non-empty 'workloads' object")
    doc.setdefault("t_i_h", 1.0)
    doc.setdefault("x_grid", [0.3, 0.5, 0.8])
    for name, vals in doc["workloads"].items():
        missing = [k for k in _WORKLOAD_FIELDS if k not in vals]
        if missing:
            raise ConfigError("workload %r missing fields: %s" % (name, ", ".join(missing)))
        bad = [k for k in _WORKLOAD_FIELDS if not isinstance(vals[k], (int, float))]
        if bad:
            raise ConfigError("workload %r has non-numeric fields: %s" % (name, ", ".join(bad)))
    return doc, False


def _cmd_model(args):
    data, packaged = _load_params(args.params)
    t_i = data["t_i_h"]
    x_grid = [float(x) for x in data["x_grid"]]
    loads = {
        name: cm.Workload(name=name, **{k: vals[k] for k in _WORKLOAD_FIELDS})
        for name, vals in data["workloads"].items()
    }
    row_names = [
        "base_ff",
        "base_f",
        "det_ff",
    ] + ["det_f_x%d" % round(x * 100) for x in x_grid] + [
        "multi_ff",
        "multi_f_k0",
        "multi_f_k1",
        "multi_f_k4",
        "single_ff",
        "single_f",
    ]
    overhead = {name: cm.overhead_row_values(w, x_grid, t_i) for name, w in loads.items()}
    rollback = {name: cm.rollback_table(w, x_grid, [0, 1, 2, 3, 4], t_i) for name, w in loads.items()}
    thresholds = {
        name: {str(k): cm.threshold_x(w, k, t_i) for k in (0, 1, 2)} for name, w in loads.items()
    }
    aet = {}
    for name, w in loads.items():
        rows = []
        for mtbe in _MTBE_CURVE_H:
            rows.append(
                {
                    "mtbe_h": mtbe,
                    "alpha": cm.fault_probability(w.t_prog_h, mtbe),
                    "detect": cm.aet(cm.detect_ff(w), cm.detect_f(w, 0.5), w.t_prog_h, mtbe),
                    "multi_k0": cm.aet(cm.multi_ff(w), cm.multi_f(w, 0, t_i), w.t_prog_h, mtbe),
                    "single": cm.aet(cm.single_ff(w), cm.single_f(w, t_i), w.t_prog_h, mtbe),
                }
            )
        aet[name] = rows
    doc = {
        "t_i_h": t_i,
        "x_grid": x_grid,
        "overhead_hours": {"rows": row_names, **{n: [round(v, 4) for v in vs] for n, vs in overhead.items()}},
        "rollback_hours": rollback,
        "threshold_fraction": thresholds,
        "aet_hours": aet,
    }
    if packaged:
        comparison = cm.compare_reference()
        doc["reference_comparison"] = {
            "rows": comparison,
            "passed": sum(1 for r in comparison if r["ok"]),
            "total": len(comparison),
        }
    if args.out:
        _write_model_csvs(args.out, doc)
        print("model tables written to %s" % args.out)
    if args.json or not args.out:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def _write_model_csvs(out_dir, doc):
    import csv

    os.makedirs(out_dir, exist_ok=True)
    apps = [k for k in doc["overhead_hours"] if k != "rows"]
    with open(os.path.join(out_dir, "overhead.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["row"] + apps)
        for i, name in enumerate(doc["overhead_hours"]["rows"]):
            wr.writerow([name] + [doc["overhead_hours"][a][i] for a in apps])
    with open(os.path.join(out_dir, "rollback.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["app", "x", "detect_f"] + ["k%d" % k for k in (0, 1, 2, 3, 4)])
        for app, rows in doc["rollback_hours"].items():
            for xs, row in rows.items():
                cells = [
                    ("NA" if row["multi_f"][str(k)] is None else round(row["multi_f"][str(k)], 4))
                    for k in (0, 1, 2, 3, 4)
                ]
                wr.writerow([app, xs, round(row["detect_f"], 4)] + cells)
    with open(os.path.join(out_dir, "thresholds.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["app", "k", "threshold_pct"])
        for app, vals in doc["threshold_fraction"].items():
            for k, v in vals.items():
                wr.writerow([app, k, round(v * 100.0, 4)])
    with open(os.path.join(out_dir, "aet.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["app", "mtbe_h", "alpha", "detect", "multi_k0", "single"])
        for app, rows in doc["aet_hours"].items():
            for row in rows:
                wr.writerow(
                    [
                        app,
                        row["mtbe_h"],
                        round(row["alpha"], 6),
                        round(row["detect"], 4),
                        round(row["multi_k0"], 4),
                        round(row["single"], 4),
                    ]
                )
    if "reference_comparison" in doc:
        with open(os.path.join(out_dir, "comparison.csv"), "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["table", "row", "app", "computed", "reference", "ok"])
            for r in doc["reference_comparison"]["rows"]:
                wr.writerow([r["table"], r["row"], r["app"], r["computed"], r["reference"], r["ok"]])


# -- report -----------------------------------------------------------------


def _cmd_report(args):
    out = args.out or os.environ.get("LOCKSTEP_OUT")
    if out is None:
        raise ConfigError("report needs --out or LOCKSTEP_OUT")
    scen = os.path.join(out, "scenarios.json")
    res = os.path.join(out, "result.json")
    if os.path.exists(scen):
        with open(scen) as f:
            doc = json.load(f)
        summary = {
            "kind": "conformance",
            "total": doc["total"],
            "passed": doc["passed"],
            "failed": doc["failed"],
            "wall_s": doc["wall_s"],
            "failures": [
                {"strategy": r["strategy"], "scenario": r["scenario"], "predicted": r["predicted"], "observed": r["observed"]}
                for sweep in doc["sweeps"].values()
                for r in sweep["rows"]
                if not r["ok"]
            ],
        }
    elif os.path.exists(res):
        with open(res) as f:
            summary = {"kind": "run", **json.load(f)}
        ledger = os.path.join(out, "ledger.json")
        if os.path.exists(ledger):
            with open(ledger) as f:
                summary["ledger"] = json.load(f)
        timings = os.path.join(out, "timings.json")
        if os.path.exists(timings):
            with open(timings) as f:
                summary["timings"] = json.load(f)
    else:
        raise ConfigError("no run artifacts under %s" % out)
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on usage errors (and on --help); surface the
        # code as a return value so callers get a plain int either way
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "conformance":
            return _cmd_conformance(args)
        if args.command == "model":
            return _cmd_model(args)
        return _cmd_report(args)
    except ConfigError as exc:
        sys.stderr.write("config error: %s\n" % exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
