"""Closed-form execution-time model for the protection strategies.

All durations are in hours.  A Workload bundles the measured inputs for
one application: baseline duration, final-comparison time, detection
overhead fraction, checkpoint count and per-checkpoint costs.  The
strategy functions give expected wall time without a fault (`_ff`) and
with one fault (`_f`):

  baseline      run twice, compare at the end; a fault forces a third
                run, so the faulted case is twice the clean time plus
                a restart
  detect        replicated execution with validated messages; a fault
                at progress fraction X costs the X prefix again
  multi         detect plus a chain of n system checkpoints; k extra
                rollback attempts replay ((k+1)^2)/2 intervals on
                average and re-store k checkpoints
  single        detect plus n validated app-level checkpoints; at most
                one rollback, costing half an interval on average

`threshold_x` gives the progress fraction above which k+1 rollback
attempts still beat stopping and relaunching; `admissible_kmax` caps k
by how many checkpoints exist at detection time.  `aet` folds the
faulted and fault-free times into an expected duration given the mean
time between errors.
"""

import json
import math
from dataclasses import dataclass
from importlib import resources


@dataclass(frozen=True)
class Workload:
    name: str
    t_prog_h: float
    t_comp_s: float
    f_d: float
    n_ckpt: int
    t_cs_s: float
    t_rest_s: float
    t_ca_s: float
    t_comp_app_s: float

    @property
    def t_comp_h(self):
        return self.t_comp_s / 3600.0

    @property
    def t_cs_h(self):
        return self.t_cs_s / 3600.0

    @property
    def t_rest_h(self):
        return self.t_rest_s / 3600.0

    @property
    def t_ca_h(self):
        return self.t_ca_s / 3600.0

    @property
    def t_comp_app_h(self):
        return self.t_comp_app_s / 3600.0

    @property
    def detect_prog_h(self):
        return self.t_prog_h * (1.0 + self.f_d)


def load_data():
    with resources.files("lockstep.data").joinpath("workloads.json").open() as f:
        return json.load(f)


def workloads():
    data = load_data()
    return {name: Workload(name=name, **vals) for name, vals in data["workloads"].items()}


# -- strategy times ---------------------------------------------------------


def base_ff(w):
    return w.t_prog_h + w.t_comp_h


def base_f(w):
    return 2.0 * (w.t_prog_h + w.t_comp_h) + w.t_rest_h


def detect_ff(w):
    return w.detect_prog_h + w.t_comp_h


def detect_f(w, x):
    return w.detect_prog_h * (x + 1.0) + w.t_rest_h + w.t_comp_h


def multi_ff(w):
    return detect_ff(w) + w.n_ckpt * w.t_cs_h


def rework_sum(k):
    """Average intervals replayed over k+1 rollback attempts, term form."""
    return sum(k - m + 0.5 for m in range(k + 1))


def rework_closed(k):
    return (k + 1) ** 2 / 2.0


def multi_f(w, k, t_i_h=1.0):
    return (
        w.detect_prog_h
        + w.t_comp_h
        + (w.n_ckpt + k) * w.t_cs_h
        + rework_closed(k) * t_i_h
        + (k + 1) * w.t_rest_h
    )


def single_ff(w):
    return detect_ff(w) + w.n_ckpt * (w.t_ca_h + w.t_comp_app_h)


def single_f(w, t_i_h=1.0):
    return single_ff(w) + 0.5 * t_i_h + w.t_rest_h


# -- derived quantities -----------------------------------------------------


def detect_overhead(det_fa_h, t_prog_h, t_comp_h):
    """Overhead fraction implied by a measured detect-mode clean time."""
    base = t_prog_h + t_comp_h
    return (det_fa_h - base) / base


def threshold_x(w, k, t_i_h=1.0):
    """Progress fraction where k+1 rollback attempts tie with relaunch."""
    num = (w.n_ckpt + k) * w.t_cs_h + rework_closed(k) * t_i_h + k * w.t_rest_h
    return num / w.detect_prog_h


def admissible_kmax(w, x, t_i_h=1.0):
    """Largest k whose checkpoint exists when a fault lands at fraction x."""
    return math.floor(x * detect_ff(w) / t_i_h) - 1


def fault_probability(t_prog_h, mtbe_h):
    return 1.0 - math.exp(-t_prog_h / mtbe_h)


def aet(t_fa_h, t_fp_h, t_prog_h, mtbe_h):
    alpha = fault_probability(t_prog_h, mtbe_h)
    return t_fp_h * alpha + t_fa_h * (1.0 - alpha)


# -- report tables ----------------------------------------------------------


def overhead_row_values(w, x_grid, t_i_h=1.0):
    """The twelve strategy times in canonical row order."""
    out = [base_ff(w), base_f(w), detect_ff(w)]
    out.extend(detect_f(w, x) for x in x_grid)
    out.append(multi_ff(w))
    out.extend(multi_f(w, k, t_i_h) for k in (0, 1, 4))
    out.append(single_ff(w))
    out.append(single_f(w, t_i_h))
    return out


def rollback_table(w, x_grid, k_grid, t_i_h=1.0):
    """Relaunch vs k+1 rollback attempts at each detection fraction."""
    rows = {}
    for x in x_grid:
        kmax = admissible_kmax(w, x, t_i_h)
        rows[str(x)] = {
            "detect_f": detect_f(w, x),
            "multi_f": {
                str(k): (multi_f(w, k, t_i_h) if k <= kmax else None) for k in k_grid
            },
            "kmax": kmax,
        }
    return rows


def matches_reference(computed_h, reference_h, tol=0.01):
    """Two-decimal comparison: round, then allow one cent of an hour."""
    return abs(round(computed_h, 2) - reference_h) <= tol + 1e-12


def compare_reference():
    """Every reference cell vs the model.  Returns comparison rows."""
    data = load_data()
    t_i = data["t_i_h"]
    x_grid = data["x_grid"]
    loads = workloads()
    ref = data["reference"]
    rows = []
    names = ref["overhead_hours"]["rows"]
    for app in ("matmul", "jacobi", "sw"):
        computed = overhead_row_values(loads[app], x_grid, t_i)
        for name, got, want in zip(names, computed, ref["overhead_hours"][app]):
            rows.append(
                {
                    "table": "overhead",
                    "row": name,
                    "app": app,
                    "computed": round(got, 4),
                    "reference": want,
                    "ok": matches_reference(got, want),
                }
            )
    rbitems = ref["rollback_hours"]
    w = loads[rbitems["app"]]
    for xs, want in rbitems["detect_f"].items():
        got = detect_f(w, float(xs))
        rows.append(
            {
                "table": "rollback",
                "row": "detect_f_x%s" % xs,
                "app": w.name,
                "computed": round(got, 4),
                "reference": want,
                "ok": matches_reference(got, want),
            }
        )
    for ks, want in rbitems["multi_f"].items():
        got = multi_f(w, int(ks), t_i)
        rows.append(
            {
                "table": "rollback",
                "row": "multi_f_k%s" % ks,
                "app": w.name,
                "computed": round(got, 4),
                "reference": want,
                "ok": matches_reference(got, want),
            }
        )
    for xs, want_nas in rbitems["not_admissible"].items():
        kmax = admissible_kmax(w, float(xs), t_i)
        got_nas = [k for k in (0, 1, 2, 3, 4) if k > kmax]
        rows.append(
            {
                "table": "rollback",
                "row": "not_admissible_x%s" % xs,
                "app": w.name,
                "computed": got_nas,
                "reference": want_nas,
                "ok": got_nas == want_nas,
            }
        )
    th = ref["threshold_pct"]
    w = loads[th["app"]]
    for ks, want_pct in th["values"].items():
        got_pct = threshold_x(w, int(ks), t_i) * 100.0
        rows.append(
            {
                "table": "threshold",
                "row": "x_k%s" % ks,
                "app": w.name,
                "computed": round(got_pct, 4),
                "reference": want_pct,
                "ok": abs(got_pct - want_pct) <= 0.2 + 1e-12,
            }
        )
    return rows
