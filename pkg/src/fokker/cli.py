"""Command-line front end.

    fokker <experiment> --config <path> [--out <dir>] [--seed <n>] [--mode uniform-hbar|mixed-hbar]

Exit codes: 0 ok, 2 config error, 3 numerical failure (non-convergence,
near collision, failed check), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np
import scipy

from fokker import __version__
from fokker.action import fokker_action_total
from fokker.canonical import InversionError
from fokker.checks import finite_difference_check, random_configuration
from fokker.config import EXPERIMENTS, ConfigError, ExperimentConfig, describe_defaults, load_config
from fokker.minkowski import NonTimelikeSegmentError, SingularCrossingError
from fokker.propagator import (
    CostGuardError,
    QuadratureSpec,
    propagator_monte_carlo,
    propagator_quadrature,
)
from fokker.qpla import NodeCrossingError, accumulate_eigenvalue, equivalence_check, nonlocality_scaling_check
from fokker.report import emit_report, error_record, trajectory_rows
from fokker.solver import (
    NonConvergenceError,
    coulomb_limit_oracle,
    compare_with_coulomb,
    extremize_action,
)

NUMERICAL_ERRORS = (NonConvergenceError, SingularCrossingError, NonTimelikeSegmentError, NodeCrossingError,
                    CostGuardError, InversionError, FloatingPointError, np.linalg.LinAlgError)


def _versions() -> dict:
    return {"fokker": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _action_eval(cfg: ExperimentConfig, out: dict):
    l1, l2 = cfg.boundary.straight_lines()
    br = fokker_action_total(l1, l2, cfg.params, cfg.numerics["action_mode"], cfg.numerics["free_form"])
    out["results"] = {"action": br.as_dict(), "action_mode": cfg.numerics["action_mode"]}
    out["tables"]["trajectory"] = ("trajectory", trajectory_rows((l1, l2)))


def _gradient_check(cfg: ExperimentConfig, out: dict):
    num = cfg.numerics
    rng = np.random.default_rng(num["seed"])
    rows, worst = [], {"gradient": 0.0, "momentum": 0.0}
    for trial in range(num["trials"]):
        l1, l2 = random_configuration(rng, cfg.boundary.N1, cfg.boundary.N2, cfg.params.dimension,
                                      num["perturbation"])
        res = finite_difference_check(l1, l2, cfg.params, num["fd_step"])
        for k in worst:
            worst[k] = max(worst[k], res["max_rel_error"][k])
        for q, p, i, mu, a, f, r in res["rows"]:
            rows.append({"trial": trial, "quantity": q, "particle": p, "index": i, "component": mu,
                         "analytic": a, "finite_difference": f, "rel_error": r})
    passed = max(worst.values()) <= num["gradient_tol"]
    out["results"] = {"max_rel_error": worst, "tolerance": num["gradient_tol"], "passed": passed}
    out["tables"]["gradient"] = ("gradient", rows)
    if not passed:
        out["failed"] = f"gradient check exceeded tolerance: {worst}"


def _extremize(cfg: ExperimentConfig, out: dict):
    num = cfg.numerics
    rep = extremize_action(cfg.boundary, cfg.params, tol=num["tol"], max_iter=num["max_iter"],
                           continuation_steps=num["continuation_steps"])
    res = {"action": rep.action.as_dict(), "grad_norm": rep.grad_norm, "iterations": rep.iterations,
           "converged": rep.converged}
    if num["coulomb_check"]:
        oracle = coulomb_limit_oracle(cfg.boundary, cfg.params, steps=num["coulomb_steps"])
        bc = cfg.boundary
        scale = float(np.linalg.norm(bc.start2[1:] - bc.start1[1:]))
        res["coulomb_deviation"] = compare_with_coulomb(rep, oracle, scale, cfg.params.c)
    out["results"] = res
    out["tables"]["trajectory"] = ("trajectory", trajectory_rows(rep.lines))
    for k, line in enumerate(rep.lines, start=1):
        out["plots"][f"worldline{k}"] = [(v[0], v[1]) for v in line.vertices]


def _spec(num: dict) -> QuadratureSpec:
    return QuadratureSpec(damping=num["damping"], interaction_damping=num["interaction_damping"])


def _propagate(cfg: ExperimentConfig, out: dict):
    num = cfg.numerics
    rows, results = [], {}
    for mode in cfg.modes:
        recs = []
        if num["method"] in ("quadrature", "both"):
            r = propagator_quadrature(cfg.boundary, cfg.params, _spec(num), order=num["order"], mode=mode)
            recs.append(r)
        if num["method"] in ("monte_carlo", "both"):
            r = propagator_monte_carlo(cfg.boundary, cfg.params, num["samples"], num["seed"],
                                       order=num["order"], mode=mode)
            recs.append(r)
        results[mode] = []
        for r in recs:
            rec = r.to_record(cfg.params)
            rec["mode"] = mode
            rec["order"] = r.order
            rec["ladder_monotone"] = r.ladder_monotone
            results[mode].append(rec)
            rows.append({"method": r.method, "mode": mode, "order": r.order, "re": r.value.real,
                         "im": r.value.imag, "stderr": r.stderr, "cost": r.cost})
    out["results"] = {"propagator": results}
    out["tables"]["propagator"] = ("propagator", rows)


def _equivalence(cfg: ExperimentConfig, out: dict):
    num = cfg.numerics
    order = num["order"]
    ladder = num["refinement_ladder"] if order == "first" else [num["interaction_damping"]]
    tol = num["equivalence_tol_first"] if order == "first" else num["equivalence_tol_free"]
    rows, slab_rows, results = [], [], {}
    failed = []
    for mode in cfg.modes:
        devs = []
        for kappa in ladder:
            spec = QuadratureSpec(damping=num["damping"], interaction_damping=kappa)
            rep = equivalence_check(cfg.boundary, cfg.params, spec, order, mode, num["gh_nodes"])
            devs.append(rep.deviation)
            rows.append({"mode": mode, "order": order, "damping": kappa if order == "first" else 0.0,
                         "lambda_re": rep.lambda_.real, "lambda_im": rep.lambda_.imag,
                         "lnK_re": rep.log_K.real, "lnK_im": rep.log_K.imag, "deviation": rep.deviation})
        eig = accumulate_eigenvalue(cfg.boundary, cfg.params, mode, order, n_nodes=num["gh_nodes"])
        for s in eig.slabs:
            slab_rows.append({"mode": mode, "particle": s["particle"], "segment": s["segment"],
                              "k1": s["k1"], "k2": s["k2"], "increment_re": s["increment"].real,
                              "increment_im": s["increment"].imag})
        decreasing = all(b < a for a, b in zip(devs, devs[1:]))
        ok = devs[-1] <= tol and decreasing
        results[mode] = {"lambda": rep.lambda_, "log_K": rep.log_K, "deviation": devs[-1],
                         "ladder": list(ladder), "ladder_deviations": devs, "decreasing": decreasing,
                         "branch_offset": eig.branch_offset, "tolerance": tol, "passed": ok}
        out["plots"][f"deviation_{mode}"] = list(zip(ladder, devs))
        if not ok:
            failed.append(mode)
    out["results"] = {"order": order, "modes": results}
    out["tables"]["ladder"] = ("ladder", rows)
    out["tables"]["slabs"] = ("slabs", slab_rows)
    if failed:
        out["failed"] = f"equivalence check failed in mode(s) {failed}"


def _sigma_scaling(cfg: ExperimentConfig, out: dict):
    num = cfg.numerics
    ladder = np.logspace(math.log10(num["sigma_min"]), math.log10(num["sigma_max"]), num["sigma_points"])
    rep = nonlocality_scaling_check(cfg.params, ladder)
    passed = rep.ok and abs(rep.slope + 1.0) <= num["slope_tol"]
    out["results"] = {"slope": rep.slope, "intercept": rep.intercept, "max_residual": rep.max_residual,
                      "fit_ok": rep.ok, "message": rep.message, "passed": passed}
    out["tables"]["sigma"] = ("sigma", [{"sigma": s, "magnitude": m}
                                        for s, m in zip(rep.sigmas, rep.magnitudes)])
    out["plots"]["sigma_scaling"] = [(math.log(s), math.log(m)) for s, m in zip(rep.sigmas, rep.magnitudes)]
    if not passed:
        out["failed"] = f"sigma scaling exponent {rep.slope:.4f} outside -1 +/- {num['slope_tol']}"


RUNNERS = {
    "action-eval": _action_eval,
    "gradient-check": _gradient_check,
    "extremize": _extremize,
    "propagate": _propagate,
    "equivalence": _equivalence,
    "sigma-scaling": _sigma_scaling,
}


def run_experiment(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run one configured experiment and write its report; returns (exit status, report)."""
    out = {"results": {}, "tables": {}, "plots": {}}
    t0 = time.perf_counter()
    RUNNERS[cfg.experiment](cfg, out)
    elapsed = time.perf_counter() - t0
    status = "check-failed" if "failed" in out else "ok"
    if "failed" in out:
        out["results"]["failure"] = out["failed"]
    report = emit_report(
        cfg.output["dir"], cfg.experiment, cfg.resolved, out["results"], out["tables"], out["plots"],
        {"experiment": elapsed}, _versions(), status, cfg.output["formats"].split(","),
        cfg.params.dimension,
    )
    return (3 if "failed" in out else 0), report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fokker",
        description="Numerical experiments for the two-charge direct-interaction action.",
        epilog="Configuration keys and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="INI file with [params], [boundary], [numerics], [output]")
    p.add_argument("--out", help="output directory (overrides output.dir and FOKKER_OUT)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides numerics.seed)")
    p.add_argument("--mode", choices=("uniform-hbar", "mixed-hbar"), help="constant mode (default: both)")
    return p


def _fail(code: int, exc: BaseException, experiment: str | None, outdir: str | None) -> int:
    rec = error_record(code, exc, experiment)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if outdir and code != 4:
        try:
            os.makedirs(outdir, exist_ok=True)
            with open(os.path.join(outdir, "error.json"), "w", encoding="utf-8") as fh:
                json.dump(rec, fh, sort_keys=True, indent=2)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    outdir = args.out
    try:
        cfg = load_config(args.config, args.experiment, args.seed, args.mode, args.out)
    except ConfigError as exc:
        return _fail(2, exc, args.experiment, outdir)
    except OSError as exc:
        return _fail(4, exc, args.experiment, None)
    outdir = cfg.output["dir"]
    try:
        code, report = run_experiment(cfg)
    except NUMERICAL_ERRORS as exc:
        return _fail(3, exc, args.experiment, outdir)
    except OSError as exc:
        return _fail(4, exc, args.experiment, None)
    if code:
        print(report["payload"]["results"].get("failure", "check failed"), file=sys.stderr)
    else:
        print(os.path.join(outdir, "report.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
