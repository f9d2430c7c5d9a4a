"""Independent oracle for the execution-time model.

Recomputes every model quantity from the closed-form definitions using
plain arithmetic, with no imports from the package under test, and
freezes the results into tests/data/costmodel_expected.json.  The
regression suite then requires the package implementation to reproduce
these numbers to 1e-9 hours.

Run:  python3 tools/costmodel_oracle.py
"""

import json
import math
import os

T_I_H = 1.0
X_GRID = [0.3, 0.5, 0.8]
K_GRID = [0, 1, 2, 3, 4]

WORKLOADS = {
    "matmul": {
        "t_prog_h": 10.21,
        "t_comp_s": 42.0,
        "f_d": 0.0001,
        "n_ckpt": 10,
        "t_cs_s": 14.10,
        "t_rest_s": 14.10,
        "t_ca_s": 10.58,
        "t_comp_app_s": 42.0,
    },
    "jacobi": {
        "t_prog_h": 8.92,
        "t_comp_s": 1.0,
        "f_d": 0.006,
        "n_ckpt": 8,
        "t_cs_s": 9.62,
        "t_rest_s": 9.62,
        "t_ca_s": 9.11,
        "t_comp_app_s": 1.0,
    },
    "sw": {
        "t_prog_h": 11.15,
        "t_comp_s": 1.0,
        "f_d": 0.0005,
        "n_ckpt": 11,
        "t_cs_s": 2.55,
        "t_rest_s": 2.55,
        "t_ca_s": 1.92,
        "t_comp_app_s": 1.0,
    },
}

MTBE_GRID_H = [5.0, 10.0, 25.0, 100.0]


def hours(seconds):
    return seconds / 3600.0


def compute(w):
    tp = w["t_prog_h"]
    tc = hours(w["t_comp_s"])
    fd = w["f_d"]
    n = w["n_ckpt"]
    tcs = hours(w["t_cs_s"])
    trest = hours(w["t_rest_s"])
    tca = hours(w["t_ca_s"])
    tcompa = hours(w["t_comp_app_s"])

    base_ff = tp + tc
    base_f = 2.0 * (tp + tc) + trest
    det_ff = tp * (1.0 + fd) + tc
    det_f = {str(x): tp * (1.0 + fd) * (x + 1.0) + trest + tc for x in X_GRID}
    multi_ff = det_ff + n * tcs
    multi_f = {}
    for k in K_GRID:
        rollback_sum = sum(k - m + 0.5 for m in range(k + 1))
        multi_f[str(k)] = (
            tp * (1.0 + fd) + tc + (n + k) * tcs + rollback_sum * T_I_H + (k + 1) * trest
        )
    single_ff = tp * (1.0 + fd) + tc + n * (tca + tcompa)
    single_f = single_ff + 0.5 * T_I_H + trest

    thresholds = {}
    for k in K_GRID:
        num = (n + k) * tcs + ((k + 1) ** 2 / 2.0) * T_I_H + k * trest
        thresholds[str(k)] = num / (tp * (1.0 + fd))

    kmax = {str(x): math.floor(x * det_ff / T_I_H) - 1 for x in X_GRID}

    aet = {}
    for mtbe in MTBE_GRID_H:
        alpha = 1.0 - math.exp(-tp / mtbe)
        aet[str(mtbe)] = multi_f["0"] * alpha + multi_ff * (1.0 - alpha)

    return {
        "base_ff": base_ff,
        "base_f": base_f,
        "det_ff": det_ff,
        "det_f": det_f,
        "multi_ff": multi_ff,
        "multi_f": multi_f,
        "single_ff": single_ff,
        "single_f": single_f,
        "thresholds": thresholds,
        "admissible_kmax": kmax,
        "aet_multi_k0": aet,
    }


def main():
    out = {
        "t_i_h": T_I_H,
        "x_grid": X_GRID,
        "k_grid": K_GRID,
        "mtbe_grid_h": MTBE_GRID_H,
        "workloads": WORKLOADS,
        "expected": {name: compute(w) for name, w in WORKLOADS.items()},
    }
    path = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "costmodel_expected.json")
    with open(os.path.abspath(path), "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    for name, vals in out["expected"].items():
        print(
            "%-6s base_ff=%.4f base_f=%.4f det_ff=%.4f multi_ff=%.4f single_ff=%.4f single_f=%.4f"
            % (
                name,
                vals["base_ff"],
                vals["base_f"],
                vals["det_ff"],
                vals["multi_ff"],
                vals["single_ff"],
                vals["single_f"],
            )
        )
        print("       det_f", {k: round(v, 4) for k, v in vals["det_f"].items()})
        print("       multi_f", {k: round(v, 4) for k, v in vals["multi_f"].items()})
        print("       thresholds", {k: round(v, 6) for k, v in vals["thresholds"].items()})
        print("       kmax", vals["admissible_kmax"])


if __name__ == "__main__":
    main()
