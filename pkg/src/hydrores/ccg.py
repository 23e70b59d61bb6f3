"""Column-and-constraint generation for the robust scheduling problem.

The master holds the first stage plus one balancing block per accumulated
worst-case deviation, each tied to an epigraph variable that prices the
worst already-known scenario. The subproblem searches the full budgeted set
for a deviation the master has not protected against. Lower bounds come
from the master, upper bounds from evaluating the incumbent against the
subproblem's exact worst case.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .balancing import add_balancing_block, solve_worst_case
from .dayahead import DayAheadConfig, add_first_stage, extract_schedule
from .lp import (LESS_EQUAL, LinearProgram, SolveOptions, SolveStatus, solve)
from .system import CostParams, Schedule, TimeGrid, Topology
from .uncertainty import NetLoadScenario, UncertaintySet, contains


@dataclass
class CcgIteration:
    iteration: int
    lower_bound: float       # master objective
    worst_case_value: float  # subproblem value at this iterate
    upper_bound: float       # best upper bound seen so far
    gap: float               # this iterate's optimality gap
    deltas: np.ndarray       # worst case chosen this iteration
    seconds: float


@dataclass
class CcgTrace:
    iterations: list[CcgIteration] = field(default_factory=list)
    converged: bool = False
    termination: str = ""    # gap | duplicate | max_iter
    tolerance: float = 0.0

    @property
    def iteration_count(self) -> int:
        return len(self.iterations)

    @property
    def final_gap(self) -> float:
        return self.iterations[-1].gap if self.iterations else float("nan")

    def lower_bounds(self) -> list[float]:
        return [it.lower_bound for it in self.iterations]

    def write_csv(self, path, manifest_id: Optional[str] = None) -> None:
        with open(path, "w", newline="") as f:
            if manifest_id:
                f.write(f"# manifest: {manifest_id}\n")
            writer = csv.writer(f)
            writer.writerow(["iteration", "lower_bound", "upper_bound",
                             "gap", "seconds"])
            for it in self.iterations:
                writer.writerow([it.iteration, repr(it.lower_bound),
                                 repr(it.upper_bound), repr(it.gap),
                                 repr(round(it.seconds, 6))])


@dataclass
class RobustSolution:
    schedule: Schedule
    scenarios: list[NetLoadScenario]  # the generated deviation set J
    trace: CcgTrace
    objective: float  # master objective at termination (lower bound)


def theta_lower_bound(topology: Topology) -> float:
    """Valid bound on any balancing cost: all stores full, no penalties."""
    return -sum(max(0.0, m.water_value * m.max_volume) for m in topology)


def run_ccg(master_factory: Callable[[list[np.ndarray]], tuple[LinearProgram, object, int]],
            topology: Topology, grid: TimeGrid, costs: CostParams,
            uset: UncertaintySet, tol: float, max_iter: int,
            theta_weight: float,
            initial_deviations: list[np.ndarray],
            options: Optional[SolveOptions] = None
            ) -> tuple[Schedule, list[np.ndarray], CcgTrace, float]:
    """Generic master/subproblem alternation shared by the robust models.

    `master_factory(J)` must return the master LP over scenario set J along
    with first-stage handles and the index of the epigraph variable, whose
    objective weight is `theta_weight`. Convergence is declared when the
    incumbent's gap theta_weight*(W - theta) falls within `tol`, or when the
    subproblem returns a deviation already in J (an optimality certificate
    even if solver noise keeps the gap positive).
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    J = [np.asarray(d, dtype=float) for d in initial_deviations]
    trace = CcgTrace(tolerance=tol)
    best_ub = np.inf
    best_schedule: Optional[Schedule] = None
    schedule = None
    lower = np.nan

    for k in range(1, max_iter + 1):
        t0 = time.perf_counter()
        lp, fs_handles, theta_idx = master_factory(J)
        result = solve(lp, options)
        if result.status is not SolveStatus.OPTIMAL:
            raise RuntimeError(f"master problem {result.status.value} at iteration {k}")
        lower = result.objective
        theta_k = float(result.x[theta_idx])
        schedule = extract_schedule(result, topology, grid, costs, fs_handles)

        wc = solve_worst_case(topology, grid, costs, schedule, uset, options)
        ub_k = lower + theta_weight * (wc.value - theta_k)
        if ub_k < best_ub:
            best_ub, best_schedule = ub_k, schedule
        gap = theta_weight * (wc.value - theta_k)
        trace.iterations.append(CcgIteration(
            iteration=k, lower_bound=lower, worst_case_value=wc.value,
            upper_bound=best_ub, gap=gap,
            deltas=wc.deltas, seconds=time.perf_counter() - t0))

        if gap <= tol:
            trace.converged = True
            trace.termination = "gap"
            return schedule, J, trace, lower
        if any(np.array_equal(d, wc.deltas) for d in J):
            # The master already contains this deviation; nothing new can be
            # generated, so the incumbent is optimal despite the residual gap.
            trace.converged = True
            trace.termination = "duplicate"
            return schedule, J, trace, lower
        J.append(wc.deltas)

    trace.converged = False
    trace.termination = "max_iter"
    return best_schedule if best_schedule is not None else schedule, J, trace, lower


def _dedupe(deviations: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for d in deviations:
        if not any(np.array_equal(d, seen) for seen in out):
            out.append(d)
    return out


def seed_deviations(uset: UncertaintySet, T: int,
                    warm_start: Optional[list] = None) -> list[np.ndarray]:
    """Validated initial deviation set: warm-start entries or covering_start.

    Warm-start entries may be arrays or scenario objects with a `deltas`
    attribute; each must lie inside the deviation set.
    """
    if not warm_start:
        return covering_start(uset, T)
    seeds = []
    for i, d in enumerate(warm_start):
        d = np.asarray(getattr(d, "deltas", d), dtype=float)
        if d.shape != (T,):
            raise ValueError(
                f"warm-start scenario {i} has length {d.size}, expected {T}")
        if not contains(uset, d):
            raise ValueError(
                f"warm-start scenario {i} lies outside the deviation set")
        seeds.append(d)
    return _dedupe(seeds)


def covering_start(uset: UncertaintySet, T: int) -> list[np.ndarray]:
    """Initial deviation set touching every period in both directions.

    The master only hedges periods hit by a scenario already in J, because
    reserve carries a small positive price; a bare zero-vector start
    therefore lets the subproblem dodge to untouched periods for many
    iterations. Seeding blockwise +-lambda vertices (ceil(T/gamma) per sign)
    removes that discovery phase without changing the converged objective.
    """
    zero = np.zeros(T)
    if uset.lambda_max <= 0.0 or uset.gamma <= 0:
        return [zero]
    vecs = [zero]
    for sign in (1.0, -1.0):
        for start in range(0, T, uset.gamma):
            v = np.zeros(T)
            v[start:start + uset.gamma] = sign * uset.lambda_max
            vecs.append(v)
    return vecs


def solve_robust(topology: Topology, grid: TimeGrid, costs: CostParams,
                 uset: UncertaintySet, tol: float = 1.0, max_iter: int = 100,
                 warm_start: Optional[list] = None,
                 config: Optional[DayAheadConfig] = None,
                 options: Optional[SolveOptions] = None) -> RobustSolution:
    """Schedule minimizing first-stage cost plus worst-case balancing cost.

    `warm_start` seeds the master with a previous run's deviation set;
    every seed must lie inside the uncertainty set. Cold starts seed the
    zero deviation plus a blockwise period cover (see covering_start), which
    keeps the master bounded and skips the period-discovery iterations.
    """
    config = config or DayAheadConfig(include_reserve_req=False)
    seeds = seed_deviations(uset, grid.T, warm_start)
    theta_lb = theta_lower_bound(topology)

    def factory(J: list[np.ndarray]):
        lp = LinearProgram(name="robust_master")
        fs = add_first_stage(lp, topology, grid, costs, config)
        theta = lp.add_variable("theta", theta_lb, np.inf, obj=1.0)
        for j, deltas in enumerate(J):
            block = add_balancing_block(lp, topology, grid, costs, f"j{j}:",
                                        deltas, weight=0.0, first_stage=fs)
            lp.add_constraint(f"epigraph[{j}]",
                              block.cost_terms + [(theta, -1.0)],
                              LESS_EQUAL, 0.0)
        return lp, fs, theta

    schedule, J, trace, objective = run_ccg(
        factory, topology, grid, costs, uset, tol, max_iter,
        theta_weight=1.0, initial_deviations=seeds, options=options)
    prob = 1.0 / len(J)
    scenarios = [NetLoadScenario(d, prob, "robust") for d in J]
    return RobustSolution(schedule=schedule, scenarios=scenarios,
                          trace=trace, objective=objective)
