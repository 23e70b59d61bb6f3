"""Command-line front end: solve models, simulate schedules, run sweeps.

Every run writes a manifest recording the inputs that determine its
outputs (hashes, seeds, tolerances, versions). Reruns with an identical
manifest id produce byte-identical CSVs; wall times live in a separate
manifest section excluded from the id.

Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .ccg import solve_robust
from .composite import (MODEL_KINDS, ModelSpec, solve_mixed, solve_stochastic,
                        solve_unified)
from .dayahead import DayAheadConfig, InfeasibleScheduleError, solve_day_ahead
from .lp import SolverBackendError
from .presets import PRESET_NAMES, get_preset
from .simulator import (compute_baseline, foresight_values, run_monte_carlo,
                        sweep_beta, write_samples_csv, write_summary_csv)
from .system import (SystemFormatError, SystemValidationError, load_system,
                     system_fingerprint, write_reserve_csv, write_schedule_csv)
from .uncertainty import (ScenarioFormatError, UncertaintySet, load_scenarios,
                          sample, save_scenarios)

_MODEL_ALIASES = {"det": "deterministic", "stoch": "stochastic"}

_VALIDATION_ERRORS = (SystemFormatError, SystemValidationError,
                      ScenarioFormatError, ValueError, KeyError,
                      FileNotFoundError, NotADirectoryError)
_SOLVER_ERRORS = (SolverBackendError, InfeasibleScheduleError, RuntimeError)

_SIM_SEED_DEFAULT = 1000003  # independent of scenario-generation seeds


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _load_system_arg(value):
    """System from a JSON file path or a built-in preset name."""
    if os.path.isfile(value):
        topology, grid, costs = load_system(value)
        return topology, grid, costs, {"source": value,
                                       "file_sha256": _sha256_file(value)}
    if value in PRESET_NAMES:
        topology, grid, costs = get_preset(value)
        return topology, grid, costs, {"source": f"preset:{value}"}
    raise FileNotFoundError(
        f"system {value!r} is neither a file nor a preset ({', '.join(PRESET_NAMES)})")


def _parse_reserve_req(value):
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        pass
    with open(value) as f:
        req = json.load(f)
    if not isinstance(req, list):
        raise ValueError(f"reserve requirement file {value} must hold a JSON list")
    return [float(x) for x in req]


def _parse_betas(text: str) -> list[float]:
    """Either comma-separated values or start:stop:step, endpoints included."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"beta range {text!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("beta range step must be positive")
        n = int(round((stop - start) / step))
        betas = [round(start + k * step, 10) for k in range(n + 1)]
        return [b for b in betas if b <= stop + 1e-12]
    return [float(p) for p in text.split(",") if p.strip()]


class RunManifest:
    """Inputs, outputs and results of one CLI invocation."""

    def __init__(self, command: str, inputs: dict):
        self.command = command
        self.inputs = inputs
        self.results: dict = {}
        self.timings: dict = {}
        self.outputs: list[str] = []
        ident = {"command": command, "inputs": inputs,
                 "versions": self._versions()}
        canon = json.dumps(ident, sort_keys=True)
        self.manifest_id = hashlib.sha256(canon.encode()).hexdigest()[:16]

    @staticmethod
    def _versions() -> dict:
        return {"artifact": __version__, "scipy": scipy.__version__,
                "backend": "HiGHS via scipy.optimize"}

    def write(self, out_dir: str) -> str:
        data = {
            "manifest_id": self.manifest_id,
            "command": self.command,
            "inputs": self.inputs,
            "versions": self._versions(),
            "results": self.results,
            "outputs": sorted(self.outputs),
            "timings": self.timings,  # excluded from the manifest id
        }
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def record_output(self, path: str) -> None:
        self.outputs.append(os.path.basename(path))


def _model_inputs(args) -> dict:
    """Normalized model description for the manifest id."""
    inputs = {
        "model": getattr(args, "model", None),
        "system": args.system,
        "beta": getattr(args, "beta", None),
        "lambda_max": getattr(args, "lambda_max", None),
        "gamma": getattr(args, "gamma", None),
        "tol": getattr(args, "tol", None),
        "max_iter": getattr(args, "max_iter", None),
        "reserve_req": getattr(args, "reserve_req", None),
    }
    for key, attr in (("scenarios", "scenarios"),
                      ("robust_scenarios", "robust_scenarios")):
        path = getattr(args, attr, None)
        inputs[key] = path
        if path:
            inputs[f"{key}_sha256"] = _sha256_file(path)
    return inputs


def _resolve_model(args, topology, grid, costs):
    """Dispatch one solve; returns (schedule, extras dict)."""
    kind = _MODEL_ALIASES.get(args.model, args.model)
    spec = ModelSpec(kind=kind, beta=args.beta, lambda_max=args.lambda_max,
                     gamma=args.gamma, tol=args.tol, max_iter=args.max_iter,
                     reserve_req=args.reserve_req,
                     scenario_path=args.scenarios,
                     robust_path=args.robust_scenarios)
    # Mixed may synthesize its robust set on the fly, which scenario-path
    # validation cannot see; ModelSpec.validate covers the rest.
    if spec.kind == "mixed" and spec.robust_path is None \
            and (spec.lambda_max is None or spec.gamma is None):
        raise ValueError("mixed model requires --robust-scenarios or "
                         "--lambda and --gamma to generate them")
    spec.validate()

    req = _parse_reserve_req(args.reserve_req)
    if req is not None:
        grid = grid.with_reserve_req(req)
    config = DayAheadConfig(include_reserve_req=(
        spec.kind == "deterministic" or req is not None))

    extras = {"kind": spec.kind}
    if spec.kind == "deterministic":
        schedule, result = solve_day_ahead(topology, grid, costs, config)
        extras["objective"] = result.objective
        return schedule, extras

    if spec.kind == "robust":
        uset = UncertaintySet(spec.lambda_max, spec.gamma)
        sol = solve_robust(topology, grid, costs, uset, spec.tol,
                           spec.max_iter, config=config)
        extras.update(objective=sol.objective, trace=sol.trace,
                      robust_scenarios=sol.scenarios,
                      iterations=sol.trace.iteration_count,
                      gap=sol.trace.final_gap,
                      converged=sol.trace.converged)
        return sol.schedule, extras

    scenarios = load_scenarios(spec.scenario_path)
    if spec.kind == "stochastic":
        sol = solve_stochastic(topology, grid, costs, scenarios, config=config)
        extras["objective"] = sol.objective
        return sol.schedule, extras

    if spec.kind == "unified":
        uset = UncertaintySet(spec.lambda_max, spec.gamma)
        warm = load_scenarios(spec.robust_path) if spec.robust_path else None
        sol = solve_unified(topology, grid, costs, scenarios, uset, spec.beta,
                            spec.tol, spec.max_iter, warm_start=warm,
                            config=config)
        extras.update(objective=sol.objective, trace=sol.trace,
                      robust_scenarios=sol.scenarios,
                      iterations=sol.trace.iteration_count,
                      gap=sol.trace.final_gap,
                      converged=sol.trace.converged)
        return sol.schedule, extras

    # mixed
    if spec.robust_path:
        robust = load_scenarios(spec.robust_path)
    else:
        uset = UncertaintySet(spec.lambda_max, spec.gamma)
        rsol = solve_robust(topology, grid, costs, uset, spec.tol,
                            spec.max_iter, config=config)
        robust = rsol.scenarios
        extras.update(trace=rsol.trace, robust_scenarios=robust)
    sol = solve_mixed(topology, grid, costs, scenarios, robust, spec.beta,
                      config=config)
    extras["objective"] = sol.objective
    return sol.schedule, extras


def _write_solve_outputs(out_dir, manifest, schedule, extras) -> None:
    path = os.path.join(out_dir, "schedule.csv")
    write_schedule_csv(path, schedule, manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    path = os.path.join(out_dir, "reserve.csv")
    write_reserve_csv(path, schedule, manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    if "robust_scenarios" in extras:
        path = os.path.join(out_dir, "robust_scenarios.csv")
        save_scenarios(path, extras["robust_scenarios"],
                       manifest_id=manifest.manifest_id)
        manifest.record_output(path)
    if "trace" in extras:
        path = os.path.join(out_dir, "ccg_trace.csv")
        extras["trace"].write_csv(path, manifest_id=manifest.manifest_id)
        manifest.record_output(path)
    manifest.results["first_stage_cost"] = schedule.first_stage_cost
    for key in ("objective", "iterations", "gap", "converged", "kind"):
        if key in extras:
            manifest.results[key] = extras[key]


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    topology, grid, costs, system_meta = _load_system_arg(args.system)
    inputs = _model_inputs(args)
    inputs["system_meta"] = system_meta
    inputs["system_fingerprint"] = system_fingerprint(topology, grid, costs)
    manifest = RunManifest("solve", inputs)
    os.makedirs(args.out, exist_ok=True)

    schedule, extras = _resolve_model(args, topology, grid, costs)
    _write_solve_outputs(args.out, manifest, schedule, extras)
    manifest.timings["total_seconds"] = time.perf_counter() - t0
    manifest.write(args.out)
    print(f"{extras['kind']}: first-stage cost {schedule.first_stage_cost:.6f} mu "
          f"-> {args.out}/schedule.csv")
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    topology, grid, costs, system_meta = _load_system_arg(args.system)
    if args.lambda_max is None:
        raise ValueError("simulate requires --lambda to size sampled deviations")
    inputs = _model_inputs(args)
    inputs["system_meta"] = system_meta
    inputs["system_fingerprint"] = system_fingerprint(topology, grid, costs)
    inputs.update(samples=args.samples, dist=args.dist, sim_seed=args.sim_seed,
                  workers=args.workers)
    manifest = RunManifest("simulate", inputs)
    os.makedirs(args.out, exist_ok=True)

    schedule, extras = _resolve_model(args, topology, grid, costs)
    _write_solve_outputs(args.out, manifest, schedule, extras)
    t1 = time.perf_counter()
    baseline = compute_baseline(topology, grid, costs)
    report = run_monte_carlo(topology, grid, costs, schedule, baseline,
                             args.lambda_max, args.dist, args.samples,
                             args.sim_seed, workers=args.workers)
    label = extras["kind"]
    path = os.path.join(args.out, "report.csv")
    write_summary_csv(path, [report.row(label, args.beta)],
                      manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    path = os.path.join(args.out, "samples.csv")
    write_samples_csv(path, [(label, args.beta, report)],
                      manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    manifest.results.update(
        procurement_cost=report.procurement, u_mean=report.u_mean,
        u_max=report.u_max, u_median=report.u_median, u_std=report.u_std)
    manifest.timings.update(solve_seconds=t1 - t0,
                            simulate_seconds=time.perf_counter() - t1)
    manifest.write(args.out)
    print(f"{label}: K={report.procurement:.4f} U_mean={report.u_mean:.4f} "
          f"U_max={report.u_max:.4f} ({report.samples} samples) -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    topology, grid, costs, system_meta = _load_system_arg(args.system)
    if args.scenarios is None:
        raise ValueError("sweep requires --scenarios")
    if args.lambda_max is None:
        raise ValueError("sweep requires --lambda to size sampled deviations")
    betas = _parse_betas(args.betas)
    inputs = _model_inputs(args)
    inputs["system_meta"] = system_meta
    inputs["system_fingerprint"] = system_fingerprint(topology, grid, costs)
    inputs.update(betas=betas, samples=args.samples, dist=args.dist,
                  sim_seed=args.sim_seed, workers=args.workers)
    manifest = RunManifest("sweep", inputs)
    os.makedirs(args.out, exist_ok=True)

    scenarios = load_scenarios(args.scenarios)
    if args.robust_scenarios:
        robust = load_scenarios(args.robust_scenarios)
    else:
        if args.lambda_max is None or args.gamma is None:
            raise ValueError("sweep requires --robust-scenarios or "
                             "--lambda and --gamma to generate them")
        uset = UncertaintySet(args.lambda_max, args.gamma)
        rsol = solve_robust(topology, grid, costs, uset, args.tol,
                            args.max_iter)
        robust = rsol.scenarios
        path = os.path.join(args.out, "robust_scenarios.csv")
        save_scenarios(path, robust, manifest_id=manifest.manifest_id)
        manifest.record_output(path)
        path = os.path.join(args.out, "ccg_trace.csv")
        rsol.trace.write_csv(path, manifest_id=manifest.manifest_id)
        manifest.record_output(path)
        manifest.results["ccg_iterations"] = rsol.trace.iteration_count

    rows = sweep_beta(topology, grid, costs, scenarios, robust, betas,
                      args.lambda_max, args.dist, args.samples,
                      args.sim_seed, workers=args.workers)
    summary, samples, failures = [], [], {}
    for row in rows:
        if row.report is None:
            failures[repr(row.beta)] = row.error
            summary.append({"label": "mixed", "beta": repr(float(row.beta)),
                            "K": "", "U_max": "", "U_mean": "", "U_median": "",
                            "U_std": "", "samples": "", "dist": args.dist,
                            "seed": args.sim_seed})
        else:
            summary.append(row.report.row("mixed", row.beta))
            samples.append(("mixed", row.beta, row.report))
    path = os.path.join(args.out, "sweep.csv")
    write_summary_csv(path, summary, manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    path = os.path.join(args.out, "samples.csv")
    write_samples_csv(path, samples, manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    if failures:
        manifest.results["failed_rows"] = failures
    manifest.results["rows"] = len(rows)
    manifest.timings["total_seconds"] = time.perf_counter() - t0
    manifest.write(args.out)
    done = sum(1 for r in rows if r.report is not None)
    print(f"sweep: {done}/{len(rows)} rows -> {args.out}/sweep.csv")
    return 0 if done == len(rows) else 3


def cmd_generate_scenarios(args) -> int:
    topology, grid, costs, system_meta = _load_system_arg(args.system)
    if args.lambda_max is None:
        raise ValueError("generate-scenarios requires --lambda")
    inputs = {"system": args.system, "system_meta": system_meta,
              "count": args.count, "dist": args.dist, "seed": args.seed,
              "lambda_max": args.lambda_max,
              "system_fingerprint": system_fingerprint(topology, grid, costs)}
    manifest = RunManifest("generate-scenarios", inputs)
    os.makedirs(args.out, exist_ok=True)
    scenarios = sample(args.dist, args.lambda_max, grid.T, args.count, args.seed)
    path = os.path.join(args.out, "scenarios.csv")
    save_scenarios(path, scenarios, manifest_id=manifest.manifest_id)
    manifest.record_output(path)
    manifest.write(args.out)
    print(f"{args.count} scenarios -> {path}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--system", help="system JSON file or preset name")
    parser.add_argument("--out", help="output directory (default hydrores_out)")
    parser.add_argument("--config", help="JSON file supplying any flag; "
                                         "explicit flags win")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=sorted(set(MODEL_KINDS) | set(_MODEL_ALIASES)))
    parser.add_argument("--beta", type=float)
    parser.add_argument("--scenarios", help="sampled scenario CSV")
    parser.add_argument("--robust-scenarios", dest="robust_scenarios",
                        help="persisted robust scenario CSV")
    parser.add_argument("--lambda", dest="lambda_max", type=float,
                        help="deviation magnitude, MW")
    parser.add_argument("--gamma", type=int, help="deviation budget, periods")
    parser.add_argument("--tol", type=float, help="generation-loop gap tolerance, mu")
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--reserve-req", dest="reserve_req",
                        help="MW applied to all periods, or JSON list file")


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--samples", type=int)
    parser.add_argument("--dist", choices=["normal", "uniform"])
    parser.add_argument("--sim-seed", dest="sim_seed", type=int)
    parser.add_argument("--workers", type=int)


_DEFAULTS = {
    "out": "hydrores_out", "tol": 1.0, "max_iter": 100,
    "samples": 1000, "dist": "normal", "sim_seed": _SIM_SEED_DEFAULT,
    "workers": 1, "seed": 0, "count": 50, "betas": "0:1:0.1",
    "model": None, "beta": None, "scenarios": None, "robust_scenarios": None,
    "lambda_max": None, "gamma": None, "reserve_req": None, "system": None,
}


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Layer precedence: explicit flag > config file > built-in default."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            config = json.load(f)
        if not isinstance(config, dict):
            raise ValueError(f"config {args.config} must hold a JSON object")
        unknown = set(config) - set(_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(vars(args))
    for key, value in merged.items():
        if value is None and key in config:
            merged[key] = config[key]
    for key, value in merged.items():
        if value is None and key in _DEFAULTS:
            merged[key] = _DEFAULTS[key]
    return argparse.Namespace(**merged)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hydrores",
        description="Cascaded-hydropower scheduling under net-load uncertainty")
    parser.add_argument(
        "--version", action="version",
        version=f"hydrores {__version__} (scipy {scipy.__version__}, "
                f"HiGHS via scipy.optimize)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one model and write its schedule")
    _add_common(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="solve, then price the schedule on samples")
    _add_common(p)
    _add_model_flags(p)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="mixed-model beta sweep with simulation")
    _add_common(p)
    _add_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--betas", help="comma list or start:stop:step (default 0:1:0.1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate-scenarios", help="sample and persist a scenario set")
    _add_common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--dist", choices=["normal", "uniform"])
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lambda_max", type=float)
    p.set_defaults(func=cmd_generate_scenarios)

    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        if args.system is None:
            raise ValueError("--system is required (file path or preset name)")
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        return _fail(exc, 2)
    except _SOLVER_ERRORS as exc:
        return _fail(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
