"""Scenario-coupled models: stochastic, mixed and unified formulations.

All three share one structure: the day-ahead block plus balancing blocks
coupled through the committed production and reserves. They differ in which
scenarios appear and how their costs are weighted:

* stochastic: sampled scenarios S weighted by probability;
* mixed: S weighted beta plus a fixed robust set J weighted (1 - beta),
  equiprobable within J;
* unified: S weighted beta plus a (1 - beta)-weighted worst-case epigraph
  whose scenarios are generated on the fly (the robust loop with sampled
  scenarios riding along in the master).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .balancing import BalancingOutcome, add_balancing_block, extract_outcome
from .ccg import CcgTrace, run_ccg, seed_deviations, theta_lower_bound
from .dayahead import DayAheadConfig, add_first_stage, day_ahead_cost, extract_schedule
from .lp import LESS_EQUAL, LinearProgram, SolveOptions, SolveStatus, solve
from .system import CostParams, Schedule, TimeGrid, Topology
from .uncertainty import NetLoadScenario, UncertaintySet

MODEL_KINDS = ("deterministic", "stochastic", "robust", "unified", "mixed")


@dataclass
class ModelSpec:
    """Which model to solve and its knobs; the CLI's currency.

    beta is meaningful only for unified and mixed; lambda_max/gamma/tol only
    for the robust family; scenario sources only where scenarios enter.
    """

    kind: str
    beta: Optional[float] = None
    lambda_max: Optional[float] = None
    gamma: Optional[int] = None
    tol: float = 1.0
    max_iter: int = 100
    reserve_req: Optional[object] = None  # scalar MW or per-period list
    scenario_path: Optional[str] = None
    robust_path: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; "
                             f"expected one of {', '.join(MODEL_KINDS)}")
        if self.kind in ("unified", "mixed"):
            if self.beta is None:
                raise ValueError(f"{self.kind} model requires beta")
            if not 0.0 <= self.beta <= 1.0:
                raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.kind in ("robust", "unified"):
            if self.lambda_max is None or self.gamma is None:
                raise ValueError(f"{self.kind} model requires lambda_max and gamma")
        if self.kind in ("stochastic", "unified", "mixed") and not self.scenario_path:
            raise ValueError(f"{self.kind} model requires a scenario set")


@dataclass
class ScenarioModelSolution:
    schedule: Schedule
    objective: float                     # solver objective, tie-break included
    outcomes: list[BalancingOutcome]     # sampled-scenario blocks, S order
    robust_outcomes: list[BalancingOutcome] = field(default_factory=list)
    trace: Optional[CcgTrace] = None
    scenarios: list[NetLoadScenario] = field(default_factory=list)  # J for unified

    @property
    def scenario_values(self) -> np.ndarray:
        return np.array([o.objective for o in self.outcomes])


def _check_scenarios(scenarios: list[NetLoadScenario], T: int,
                     require_unit_mass: bool = True) -> None:
    if not scenarios:
        raise ValueError("scenario set must be nonempty")
    for i, s in enumerate(scenarios):
        if len(s.deltas) != T:
            raise ValueError(f"scenario {i} has length {len(s.deltas)}, expected {T}")
    if require_unit_mass:
        mass = sum(s.probability for s in scenarios)
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"scenario probabilities sum to {mass}, expected 1")


def _solve_extensive(topology: Topology, grid: TimeGrid, costs: CostParams,
                     weighted_blocks: list[tuple[str, np.ndarray, float]],
                     config: DayAheadConfig,
                     options: Optional[SolveOptions]):
    """Build and solve first stage + weighted balancing blocks; no epigraph."""
    lp = LinearProgram(name="extensive_form")
    fs = add_first_stage(lp, topology, grid, costs, config)
    handles = []
    for prefix, deltas, weight in weighted_blocks:
        handles.append(add_balancing_block(
            lp, topology, grid, costs, prefix, deltas,
            weight=weight, first_stage=fs))
    result = solve(lp, options)
    if result.status is not SolveStatus.OPTIMAL:
        raise RuntimeError(f"extensive form {result.status.value}; "
                           "complete recourse should prevent this")
    schedule = extract_schedule(result, topology, grid, costs, fs)
    outcomes = [extract_outcome(result.x, h, topology, grid,
                                h.stage_cost(result.x)) for h in handles]
    return schedule, result, outcomes


def _check_decomposition(objective: float, schedule: Schedule,
                         parts: list[tuple[float, float]],
                         topology, grid, costs, config) -> None:
    """Objective must equal Z^da + sum(weight * Z^bal) + the tie-break term."""
    total = day_ahead_cost(schedule, topology, grid, costs)
    total += config.epsilon(costs) * float(schedule.reserve.sum())
    total += sum(w * z for w, z in parts)
    if abs(total - objective) > 1e-6 * (1.0 + abs(objective)):
        raise RuntimeError(
            f"objective decomposition drifts by {abs(total - objective):.3e}")


def solve_stochastic(topology: Topology, grid: TimeGrid, costs: CostParams,
                     scenarios: list[NetLoadScenario],
                     config: Optional[DayAheadConfig] = None,
                     options: Optional[SolveOptions] = None
                     ) -> ScenarioModelSolution:
    """Two-stage model over sampled scenarios in extensive form."""
    config = config or DayAheadConfig(include_reserve_req=False)
    _check_scenarios(scenarios, grid.T)
    blocks = [(f"s{j}:", np.asarray(s.deltas, dtype=float), s.probability)
              for j, s in enumerate(scenarios)]
    schedule, result, outcomes = _solve_extensive(
        topology, grid, costs, blocks, config, options)
    _check_decomposition(result.objective, schedule,
                         [(s.probability, o.objective)
                          for s, o in zip(scenarios, outcomes)],
                         topology, grid, costs, config)
    return ScenarioModelSolution(schedule=schedule, objective=result.objective,
                                 outcomes=outcomes)


def solve_mixed(topology: Topology, grid: TimeGrid, costs: CostParams,
                scenarios: list[NetLoadScenario],
                robust_scenarios: list[NetLoadScenario], beta: float,
                config: Optional[DayAheadConfig] = None,
                options: Optional[SolveOptions] = None
                ) -> ScenarioModelSolution:
    """Extensive form over S weighted beta and J weighted (1-beta)/|J|.

    The robust set is treated as equiprobable regardless of any stored
    probabilities. At beta extremes the zero-weighted blocks stay in the
    model; they cannot change the objective, only break degenerate ties.
    """
    config = config or DayAheadConfig(include_reserve_req=False)
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    _check_scenarios(scenarios, grid.T)
    _check_scenarios(robust_scenarios, grid.T, require_unit_mass=False)
    robust_weight = (1.0 - beta) / len(robust_scenarios)
    blocks = [(f"s{j}:", np.asarray(s.deltas, dtype=float), beta * s.probability)
              for j, s in enumerate(scenarios)]
    blocks += [(f"j{j}:", np.asarray(s.deltas, dtype=float), robust_weight)
               for j, s in enumerate(robust_scenarios)]
    schedule, result, outcomes = _solve_extensive(
        topology, grid, costs, blocks, config, options)
    n_s = len(scenarios)
    parts = [(beta * s.probability, o.objective)
             for s, o in zip(scenarios, outcomes[:n_s])]
    parts += [(robust_weight, o.objective) for o in outcomes[n_s:]]
    _check_decomposition(result.objective, schedule, parts,
                         topology, grid, costs, config)
    return ScenarioModelSolution(schedule=schedule, objective=result.objective,
                                 outcomes=outcomes[:n_s],
                                 robust_outcomes=outcomes[n_s:])


def solve_unified(topology: Topology, grid: TimeGrid, costs: CostParams,
                  scenarios: list[NetLoadScenario], uset: UncertaintySet,
                  beta: float, tol: float = 1.0, max_iter: int = 100,
                  warm_start: Optional[list] = None,
                  config: Optional[DayAheadConfig] = None,
                  options: Optional[SolveOptions] = None
                  ) -> ScenarioModelSolution:
    """Expected cost weighted beta plus worst case weighted (1-beta).

    Solved by the same generation loop as the pure robust model; the master
    carries the sampled blocks throughout. At beta=1 the epigraph is
    weightless and the loop closes after one iteration; at beta=0 the
    sampled blocks are weightless and the model coincides with the pure
    robust one up to degenerate ties. `warm_start` seeds the generation
    loop exactly as in solve_robust; reusing a converged robust run's
    scenario set typically cuts the iteration count to a handful.
    """
    config = config or DayAheadConfig(include_reserve_req=False)
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    _check_scenarios(scenarios, grid.T)
    theta_lb = theta_lower_bound(topology)
    s_blocks = [(f"s{j}:", np.asarray(s.deltas, dtype=float),
                 beta * s.probability) for j, s in enumerate(scenarios)]

    def factory(J: list[np.ndarray]):
        lp = LinearProgram(name="unified_master")
        fs = add_first_stage(lp, topology, grid, costs, config)
        for prefix, deltas, weight in s_blocks:
            add_balancing_block(lp, topology, grid, costs, prefix, deltas,
                                weight=weight, first_stage=fs)
        theta = lp.add_variable("theta", theta_lb, np.inf, obj=1.0 - beta)
        for j, deltas in enumerate(J):
            block = add_balancing_block(lp, topology, grid, costs, f"j{j}:",
                                        deltas, weight=0.0, first_stage=fs)
            lp.add_constraint(f"epigraph[{j}]",
                              block.cost_terms + [(theta, -1.0)],
                              LESS_EQUAL, 0.0)
        return lp, fs, theta

    schedule, J, trace, objective = run_ccg(
        factory, topology, grid, costs, uset, tol, max_iter,
        theta_weight=1.0 - beta,
        initial_deviations=seed_deviations(uset, grid.T, warm_start),
        options=options)
    prob = 1.0 / len(J)
    robust = [NetLoadScenario(d, prob, "robust") for d in J]
    return ScenarioModelSolution(schedule=schedule, objective=objective,
                                 outcomes=[], trace=trace, scenarios=robust)
