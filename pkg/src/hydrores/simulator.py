"""Out-of-sample cost evaluation of committed schedules.

The committed schedule fixes the reserve procurement cost K, the premium of
its first-stage cost over the requirement-free optimum. Each simulated
deviation then prices the schedule's recourse: the balancing cost B is the
gap between re-dispatching inside the reserve box and re-dispatching with
full foresight freedom. Totals U = K + B across many samples are what the
scheduling models are judged on.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .balancing import build_balancing_primal, build_perfect_foresight
from .composite import solve_mixed
from .dayahead import DayAheadConfig, day_ahead_cost, solve_day_ahead
from .lp import SolveOptions, SolveStatus, solve
from .system import CostParams, Schedule, TimeGrid, Topology, system_fingerprint
from .uncertainty import NetLoadScenario, sample_one


@dataclass(frozen=True)
class Baseline:
    """Requirement-free day-ahead optimum; the zero point for K."""

    cost: float
    system_fingerprint: str


def compute_baseline(topology: Topology, grid: TimeGrid, costs: CostParams,
                     options: Optional[SolveOptions] = None) -> Baseline:
    schedule, _ = solve_day_ahead(
        topology, grid, costs, DayAheadConfig(include_reserve_req=False), options)
    return Baseline(cost=schedule.first_stage_cost,
                    system_fingerprint=schedule.system_fingerprint)


def procurement_cost(topology: Topology, grid: TimeGrid, costs: CostParams,
                     schedule: Schedule, baseline: Baseline) -> float:
    """First-stage premium over the requirement-free optimum.

    The premium is provably nonnegative (the baseline optimizes over a
    superset of every model's first-stage feasible set), so values inside
    solver rounding of zero are clamped up; anything further below raises.
    """
    if schedule.system_fingerprint != baseline.system_fingerprint:
        raise ValueError(
            "schedule and baseline were solved on different systems "
            f"({schedule.system_fingerprint} vs {baseline.system_fingerprint})")
    premium = day_ahead_cost(schedule, topology, grid, costs) - baseline.cost
    if premium < -1e-6:
        raise RuntimeError(
            f"procurement cost {premium:.3e} below the baseline bound")
    return float(max(premium, 0.0))


class CostEvaluator:
    """Prices deviations against one schedule, reusing compiled LPs.

    Only the power-balance right-hand side changes between deviations, so
    both the boxed and the foresight LPs are built once and re-solved with
    patched loads.
    """

    def __init__(self, topology: Topology, grid: TimeGrid, costs: CostParams,
                 schedule: Schedule, options: Optional[SolveOptions] = None):
        self.grid = grid
        self.options = options
        self.boxed = build_balancing_primal(topology, grid, costs, schedule,
                                            np.zeros(grid.T))
        self.foresight = build_perfect_foresight(topology, grid, costs,
                                                 np.zeros(grid.T))
        self._rows = [f"power_balance[{t}]" for t in range(grid.T)]

    def _value(self, lp, deltas) -> float:
        for t, row in enumerate(self._rows):
            lp.set_rhs(row, self.grid.net_load[t] + deltas[t])
        result = solve(lp, self.options)
        if result.status is not SolveStatus.OPTIMAL:
            raise RuntimeError(f"{lp.name} LP {result.status.value} during simulation")
        return result.objective

    def boxed_value(self, deltas) -> float:
        return self._value(self.boxed, deltas)

    def foresight_value(self, deltas) -> float:
        return self._value(self.foresight, deltas)

    def balancing_cost(self, deltas, foresight: Optional[float] = None) -> float:
        boxed = self.boxed_value(deltas)
        if foresight is None:
            foresight = self.foresight_value(deltas)
        cost = boxed - foresight
        # The foresight problem is a relaxation, so the true difference is
        # nonnegative; anything below is solver rounding on equal optima.
        if cost < -1e-6:
            raise RuntimeError(
                f"balancing cost {cost:.3e} below the relaxation bound")
        return max(cost, 0.0)


def balancing_cost(topology: Topology, grid: TimeGrid, costs: CostParams,
                   schedule: Schedule, deltas,
                   options: Optional[SolveOptions] = None) -> float:
    """Boxed-minus-foresight cost of one deviation; one-shot convenience."""
    return CostEvaluator(topology, grid, costs, schedule,
                         options).balancing_cost(deltas)


@dataclass
class CostReport:
    procurement: float          # K
    balancing: np.ndarray       # B_i per sample
    total: np.ndarray           # U_i = K + B_i
    u_max: float
    u_mean: float
    u_median: float
    u_std: float                # sample std, n-1 denominator
    samples: int
    dist: str
    seed: int

    def row(self, label: str, beta: Optional[float] = None) -> dict:
        return {
            "label": label,
            "beta": "" if beta is None else repr(float(beta)),
            "K": repr(self.procurement),
            "U_max": repr(self.u_max),
            "U_mean": repr(self.u_mean),
            "U_median": repr(self.u_median),
            "U_std": repr(self.u_std),
            "samples": self.samples,
            "dist": self.dist,
            "seed": self.seed,
        }


def _evaluate_chunk(topology, grid, costs, schedule, dist, lambda_max, seed,
                    indices, foresight_values, options):
    evaluator = CostEvaluator(topology, grid, costs, schedule, options)
    out = []
    for i in indices:
        deltas = sample_one(dist, lambda_max, grid.T, seed, i)
        fv = None if foresight_values is None else foresight_values[i]
        out.append((i, evaluator.balancing_cost(deltas, foresight=fv)))
    return out


def foresight_values(topology: Topology, grid: TimeGrid, costs: CostParams,
                     dist: str, lambda_max: float, count: int, seed: int,
                     options: Optional[SolveOptions] = None) -> np.ndarray:
    """Foresight costs per sample; schedule-independent, cacheable across
    schedules evaluated on the same sample stream."""
    lp = build_perfect_foresight(topology, grid, costs, np.zeros(grid.T))
    rows = [f"power_balance[{t}]" for t in range(grid.T)]
    out = np.empty(count)
    for i in range(count):
        deltas = sample_one(dist, lambda_max, grid.T, seed, i)
        for t, row in enumerate(rows):
            lp.set_rhs(row, grid.net_load[t] + deltas[t])
        result = solve(lp, options)
        if result.status is not SolveStatus.OPTIMAL:
            raise RuntimeError(f"foresight LP {result.status.value} at sample {i}")
        out[i] = result.objective
    return out


def run_monte_carlo(topology: Topology, grid: TimeGrid, costs: CostParams,
                    schedule: Schedule, baseline: Baseline, lambda_max: float,
                    dist: str = "normal", count: int = 1000, seed: int = 0,
                    workers: int = 1,
                    foresight_cache: Optional[np.ndarray] = None,
                    options: Optional[SolveOptions] = None) -> CostReport:
    """Sample deviations, price them and aggregate.

    Sample i is generated from seed XOR i, so splitting the index range over
    processes returns bit-identical costs to a sequential run.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    K = procurement_cost(topology, grid, costs, schedule, baseline)
    indices = list(range(count))
    if workers <= 1:
        pairs = _evaluate_chunk(topology, grid, costs, schedule, dist,
                                lambda_max, seed, indices, foresight_cache,
                                options)
    else:
        chunks = [indices[w::workers] for w in range(workers)]
        pairs = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_chunk, topology, grid, costs,
                                   schedule, dist, lambda_max, seed, chunk,
                                   foresight_cache, options)
                       for chunk in chunks if chunk]
            for fut in futures:
                pairs.extend(fut.result())
    balancing = np.empty(count)
    for i, value in pairs:
        balancing[i] = value
    total = K + balancing
    std = float(np.std(total, ddof=1)) if count > 1 else float("nan")
    return CostReport(
        procurement=K, balancing=balancing, total=total,
        u_max=float(total.max()), u_mean=float(total.mean()),
        u_median=float(np.median(total)), u_std=std,
        samples=count, dist=dist, seed=seed)


@dataclass
class SweepRow:
    beta: float
    report: Optional[CostReport]
    error: Optional[str] = None
    solve_seconds: float = 0.0
    simulate_seconds: float = 0.0


def sweep_beta(topology: Topology, grid: TimeGrid, costs: CostParams,
               scenarios: list[NetLoadScenario],
               robust_scenarios: list[NetLoadScenario],
               betas, lambda_max: float, dist: str = "normal",
               count: int = 1000, seed: int = 0, workers: int = 1,
               config: Optional[DayAheadConfig] = None,
               options: Optional[SolveOptions] = None) -> list[SweepRow]:
    """One mixed-model solve and simulation per beta.

    A failing row is recorded with its error and the sweep continues; the
    foresight costs are computed once since they do not depend on the
    schedule under evaluation.
    """
    betas = list(betas)
    if not betas:
        raise ValueError("betas must be nonempty")
    baseline = compute_baseline(topology, grid, costs, options)
    cache = foresight_values(topology, grid, costs, dist, lambda_max, count,
                             seed, options)
    rows = []
    for beta in betas:
        t0 = time.perf_counter()
        try:
            solution = solve_mixed(topology, grid, costs, scenarios,
                                   robust_scenarios, beta, config, options)
            t1 = time.perf_counter()
            report = run_monte_carlo(topology, grid, costs, solution.schedule,
                                     baseline, lambda_max, dist, count, seed,
                                     workers, foresight_cache=cache,
                                     options=options)
            rows.append(SweepRow(beta=beta, report=report,
                                 solve_seconds=t1 - t0,
                                 simulate_seconds=time.perf_counter() - t1))
        except Exception as exc:  # noqa: BLE001 - row isolation is the contract
            rows.append(SweepRow(beta=beta, report=None,
                                 error=f"{type(exc).__name__}: {exc}",
                                 solve_seconds=time.perf_counter() - t0))
    return rows


SUMMARY_FIELDS = ["label", "beta", "K", "U_max", "U_mean", "U_median",
                  "U_std", "samples", "dist", "seed"]


def write_summary_csv(path, rows: list[dict],
                      manifest_id: Optional[str] = None) -> None:
    """Aggregate table, one row per evaluated schedule."""
    with open(path, "w", newline="") as f:
        if manifest_id:
            f.write(f"# manifest: {manifest_id}\n")
        writer = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_samples_csv(path, entries: list[tuple[str, Optional[float], CostReport]],
                      manifest_id: Optional[str] = None) -> None:
    """Per-sample costs for distribution plots."""
    with open(path, "w", newline="") as f:
        if manifest_id:
            f.write(f"# manifest: {manifest_id}\n")
        writer = csv.writer(f)
        writer.writerow(["label", "beta", "sample", "balancing_cost", "total_cost"])
        for label, beta, report in entries:
            beta_txt = "" if beta is None else repr(float(beta))
            for i in range(report.samples):
                writer.writerow([label, beta_txt, i,
                                 repr(float(report.balancing[i])),
                                 repr(float(report.total[i]))])
