"""Day-ahead scheduling: commit production, reserves and water routing.

The day-ahead problem minimizes the value of water used (negative value of
water left in store) plus gate penalties, subject to the hydraulic network
and a symmetric spinning-reserve requirement. It is a pure LP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lp import (LinearProgram, SolveOptions, SolveResult, SolveStatus,
                 EQUAL, GREATER_EQUAL, LESS_EQUAL, solve)
from .system import (CostParams, HydroModule, Schedule, SystemValidationError,
                     TimeGrid, Topology, MM3_PER_M3S_HOUR, system_fingerprint,
                     validate_schedule, validate_topology)


@dataclass
class DayAheadConfig:
    # When False the reserve-requirement rows use rhs 0 instead of the grid's
    # per-period requirement (the two-stage models size reserves themselves).
    include_reserve_req: bool = True
    reserve_epsilon: Optional[float] = None  # overrides CostParams when set

    def epsilon(self, costs: CostParams) -> float:
        return costs.reserve_epsilon if self.reserve_epsilon is None \
            else self.reserve_epsilon


class DayAheadError(ValueError):
    pass


class InfeasibleScheduleError(RuntimeError):
    """Day-ahead problem infeasible; `group` names the failing constraints."""

    def __init__(self, group: str, detail: str = ""):
        self.group = group
        super().__init__(f"day-ahead problem infeasible ({group}){': ' + detail if detail else ''}")


@dataclass
class FirstStageHandles:
    """Variable indices of the first-stage block, for coupling and extraction.

    Arrays are indexed [module, period]; `qd` holds one (segments, T) array
    per module.
    """

    qd: list[np.ndarray]
    qb: np.ndarray
    qo: np.ndarray
    qin: np.ndarray
    qout: np.ndarray
    p: np.ndarray
    r: np.ndarray
    v: np.ndarray  # [module, 0..T]


def add_first_stage(lp: LinearProgram, topology: Topology, grid: TimeGrid,
                    costs: CostParams, config: DayAheadConfig) -> FirstStageHandles:
    """Append the full day-ahead block to `lp` and return variable handles.

    Objective terms contributed here: -WV*v_end + F*(Cb*qb + Co*qo) + eps*r.
    """
    T = grid.T
    M = len(topology)
    F = grid.period_hours
    eps = config.epsilon(costs)

    qd: list[np.ndarray] = []
    qb = np.empty((M, T), dtype=np.int64)
    qo = np.empty((M, T), dtype=np.int64)
    qin = np.empty((M, T), dtype=np.int64)
    qout = np.empty((M, T), dtype=np.int64)
    p = np.empty((M, T), dtype=np.int64)
    r = np.empty((M, T), dtype=np.int64)
    v = np.empty((M, T + 1), dtype=np.int64)

    for i, m in enumerate(topology):
        seg_idx = np.empty((len(m.segments), T), dtype=np.int64)
        for n, seg in enumerate(m.segments):
            for t in range(T):
                seg_idx[n, t] = lp.add_variable(
                    f"qd[{m.id},{n},{t}]", 0.0, seg.max_discharge)
        qd.append(seg_idx)
        for t in range(T):
            qb[i, t] = lp.add_variable(f"qb[{m.id},{t}]", 0.0, m.max_bypass,
                                       obj=F[t] * costs.bypass_penalty)
            qo[i, t] = lp.add_variable(f"qo[{m.id},{t}]", 0.0, m.max_spill,
                                       obj=F[t] * costs.spill_penalty)
            qin[i, t] = lp.add_variable(f"qin[{m.id},{t}]")
            qout[i, t] = lp.add_variable(f"qout[{m.id},{t}]")
            p[i, t] = lp.add_variable(f"p[{m.id},{t}]", 0.0, m.max_production)
            r[i, t] = lp.add_variable(f"r[{m.id},{t}]", 0.0, np.inf, obj=eps)
        v[i, 0] = lp.add_variable(f"v[{m.id},0]", m.initial_volume, m.initial_volume)
        for t in range(1, T + 1):
            obj = -m.water_value if t == T else 0.0
            v[i, t] = lp.add_variable(f"v[{m.id},{t}]", 0.0, m.max_volume, obj=obj)

    _add_routing_rows(lp, topology, grid, "", qd, qb, qo, qin, qout, v,
                      deltas=None)

    for i, m in enumerate(topology):
        for t in range(T):
            coeffs = [(p[i, t], 1.0)]
            coeffs += [(qd[i][n, t], -m.segments[n].energy_coeff)
                       for n in range(len(m.segments))]
            lp.add_constraint(f"production[{m.id},{t}]", coeffs, EQUAL, 0.0)

    for t in range(T):
        lp.add_constraint(f"power_balance[{t}]",
                          [(p[i, t], 1.0) for i in range(M)],
                          EQUAL, grid.net_load[t])

    for i, m in enumerate(topology):
        for t in range(T):
            lp.add_constraint(f"reserve_cap_up[{m.id},{t}]",
                              [(p[i, t], 1.0), (r[i, t], 1.0)],
                              LESS_EQUAL, m.max_production)
            lp.add_constraint(f"reserve_cap_dn[{m.id},{t}]",
                              [(p[i, t], 1.0), (r[i, t], -1.0)],
                              GREATER_EQUAL, 0.0)

    for t in range(T):
        req = grid.reserve_req[t] if config.include_reserve_req else 0.0
        lp.add_constraint(f"reserve_req[{t}]",
                          [(r[i, t], 1.0) for i in range(M)],
                          GREATER_EQUAL, req)

    return FirstStageHandles(qd, qb, qo, qin, qout, p, r, v)


def _add_routing_rows(lp: LinearProgram, topology: Topology, grid: TimeGrid,
                      prefix: str, qd, qb, qo, qin, qout, v, deltas) -> None:
    """Water routing and storage rows shared by all problem stages.

    `deltas` is unused here but kept in the signature so balancing blocks can
    funnel through the same code path; the power side differs per stage.
    """
    T = grid.T
    F = grid.period_hours
    for i, m in enumerate(topology):
        up_d = [topology.index[u] for u in topology.upstream["discharge"][m.id]]
        up_b = [topology.index[u] for u in topology.upstream["bypass"][m.id]]
        up_o = [topology.index[u] for u in topology.upstream["spill"][m.id]]
        for t in range(T):
            coeffs = [(qin[i, t], 1.0)]
            for j in up_d:
                coeffs += [(qd[j][n, t], -1.0) for n in range(qd[j].shape[0])]
            coeffs += [(qb[j, t], -1.0) for j in up_b]
            coeffs += [(qo[j, t], -1.0) for j in up_o]
            lp.add_constraint(f"{prefix}flow_in[{m.id},{t}]", coeffs, EQUAL, 0.0)

            coeffs = [(qout[i, t], 1.0)]
            coeffs += [(qd[i][n, t], -1.0) for n in range(qd[i].shape[0])]
            coeffs += [(qb[i, t], -1.0), (qo[i, t], -1.0)]
            lp.add_constraint(f"{prefix}flow_out[{m.id},{t}]", coeffs, EQUAL, 0.0)

            k = MM3_PER_M3S_HOUR * F[t]
            lp.add_constraint(
                f"{prefix}volume[{m.id},{t}]",
                [(v[i, t + 1], 1.0), (v[i, t], -1.0),
                 (qin[i, t], -k), (qout[i, t], k)],
                EQUAL, k * m.inflow[t])


def build_day_ahead(topology: Topology, grid: TimeGrid, costs: CostParams,
                    config: Optional[DayAheadConfig] = None) -> LinearProgram:
    violations = validate_topology(topology, grid, costs)
    if violations:
        raise SystemValidationError(violations)
    config = config or DayAheadConfig()
    lp = LinearProgram(name="day_ahead")
    add_first_stage(lp, topology, grid, costs, config)
    return lp


def recompute_volumes(topology: Topology, grid: TimeGrid, flow_in: np.ndarray,
                      flow_out: np.ndarray) -> np.ndarray:
    """Forward-integrate storage from flows; the reference water balance.

    Schedules carry volumes produced by this exact recursion so that the
    mass-balance residual is zero by construction, not merely within solver
    tolerance.
    """
    M, T = flow_in.shape
    F = np.asarray(grid.period_hours)
    vol = np.empty((M, T + 1))
    for i, m in enumerate(topology):
        vol[i, 0] = m.initial_volume
        net = np.asarray(m.inflow) + flow_in[i] - flow_out[i]
        for t in range(T):
            vol[i, t + 1] = vol[i, t] + MM3_PER_M3S_HOUR * F[t] * net[t]
    return vol


def extract_schedule(result: SolveResult, topology: Topology, grid: TimeGrid,
                     costs: CostParams, handles: Optional[FirstStageHandles] = None,
                     config: Optional[DayAheadConfig] = None) -> Schedule:
    """Turn an optimal day-ahead (or extensive-form) result into a Schedule."""
    if result.status is not SolveStatus.OPTIMAL:
        raise DayAheadError(f"cannot extract schedule from {result.status.value} result")
    config = config or DayAheadConfig()
    T = grid.T
    x = result.x
    if handles is None:
        handles = _handles_from_names(result, topology, T)

    production = x[handles.p]
    reserve = np.maximum(x[handles.r], 0.0)
    discharge = [x[seg_idx] for seg_idx in handles.qd]
    bypass = x[handles.qb]
    spill = x[handles.qo]
    flow_in = x[handles.qin]
    flow_out = x[handles.qout]

    volume = recompute_volumes(topology, grid, flow_in, flow_out)
    solver_volume = x[handles.v]
    drift = np.abs(volume - solver_volume).max()
    if drift > 1e-6:
        raise DayAheadError(
            f"recomputed volumes drift {drift:.3e} Mm3 from solver volumes")

    schedule = Schedule(
        module_ids=[m.id for m in topology],
        production=production, reserve=reserve, discharge=discharge,
        bypass=bypass, spill=spill, flow_in=flow_in, flow_out=flow_out,
        volume=volume,
        first_stage_cost=0.0,
        system_fingerprint=system_fingerprint(topology, grid, costs),
    )
    schedule.first_stage_cost = day_ahead_cost(schedule, topology, grid, costs)
    return schedule


def _handles_from_names(result: SolveResult, topology: Topology,
                        T: int) -> FirstStageHandles:
    idx = {n: i for i, n in enumerate(result.var_names)}
    M = len(topology)

    def grab(fmt, shape):
        out = np.empty(shape, dtype=np.int64)
        for i, m in enumerate(topology):
            for t in range(shape[1]):
                out[i, t] = idx[fmt.format(m=m.id, t=t)]
        return out

    qd = []
    for m in topology:
        seg_idx = np.empty((len(m.segments), T), dtype=np.int64)
        for n in range(len(m.segments)):
            for t in range(T):
                seg_idx[n, t] = idx[f"qd[{m.id},{n},{t}]"]
        qd.append(seg_idx)
    return FirstStageHandles(
        qd=qd,
        qb=grab("qb[{m},{t}]", (M, T)),
        qo=grab("qo[{m},{t}]", (M, T)),
        qin=grab("qin[{m},{t}]", (M, T)),
        qout=grab("qout[{m},{t}]", (M, T)),
        p=grab("p[{m},{t}]", (M, T)),
        r=grab("r[{m},{t}]", (M, T)),
        v=grab("v[{m},{t}]", (M, T + 1)),
    )


def day_ahead_cost(schedule: Schedule, topology: Topology, grid: TimeGrid,
                   costs: CostParams) -> float:
    """First-stage cost of a schedule, recomputed from its fields.

    Independent of any solver objective and excludes the reserve tie-break
    term. Schedules violating their invariants are rejected.
    """
    violations = validate_schedule(schedule, topology, grid)
    if violations:
        raise DayAheadError(
            "schedule violates invariants:\n" + "\n".join(f"  - {v}" for v in violations))
    F = np.asarray(grid.period_hours)
    cost = 0.0
    for i, m in enumerate(topology):
        cost -= m.water_value * schedule.volume[i, -1]
        cost += float(F @ (costs.bypass_penalty * schedule.bypass[i]
                           + costs.spill_penalty * schedule.spill[i]))
    return float(cost)


def solve_day_ahead(topology: Topology, grid: TimeGrid, costs: CostParams,
                    config: Optional[DayAheadConfig] = None,
                    options: Optional[SolveOptions] = None
                    ) -> tuple[Schedule, SolveResult]:
    """Build, solve and extract; infeasibility is diagnosed by relaxation."""
    config = config or DayAheadConfig()
    violations = validate_topology(topology, grid, costs)
    if violations:
        raise SystemValidationError(violations)
    lp = LinearProgram(name="day_ahead")
    handles = add_first_stage(lp, topology, grid, costs, config)
    result = solve(lp, options)
    if result.status is not SolveStatus.OPTIMAL:
        if result.status is SolveStatus.INFEASIBLE:
            _diagnose_infeasible(topology, grid, costs, config, options)
        raise InfeasibleScheduleError("solver", result.status.value)
    schedule = extract_schedule(result, topology, grid, costs, handles, config)
    # The solver objective must tie out against the recomputed cost once the
    # reserve tie-break term is removed.
    eps_term = config.epsilon(costs) * float(schedule.reserve.sum())
    gap = abs(schedule.first_stage_cost - (result.objective - eps_term))
    if gap > 1e-6 * (1.0 + abs(result.objective)):
        raise DayAheadError(
            f"recomputed cost differs from solver objective by {gap:.3e}")
    return schedule, result


def _diagnose_infeasible(topology, grid, costs, config, options) -> None:
    """Re-solve relaxations to name the failing constraint group."""
    if config.include_reserve_req and any(r > 0 for r in grid.reserve_req):
        relaxed = DayAheadConfig(include_reserve_req=False,
                                 reserve_epsilon=config.reserve_epsilon)
        lp = build_day_ahead(topology, grid, costs, relaxed)
        if solve(lp, options).status is SolveStatus.OPTIMAL:
            raise InfeasibleScheduleError(
                "reserve_requirement",
                "feasible once the reserve requirement is dropped")
    relaxed = DayAheadConfig(include_reserve_req=False,
                             reserve_epsilon=config.reserve_epsilon)
    lp = build_day_ahead(topology, grid, costs, relaxed)
    # Elastic power balance: if shedding load restores feasibility the power
    # balance was the binding group, otherwise the hydraulics are.
    for t in range(grid.T):
        up = lp.add_variable(f"elastic_up[{t}]", 0.0, np.inf, obj=1e9)
        dn = lp.add_variable(f"elastic_dn[{t}]", 0.0, np.inf, obj=1e9)
        lp.add_term(f"power_balance[{t}]", up, 1.0)
        lp.add_term(f"power_balance[{t}]", dn, -1.0)
    if solve(lp, options).status is SolveStatus.OPTIMAL:
        raise InfeasibleScheduleError(
            "power_balance", "feasible once the power balance is made elastic")
    raise InfeasibleScheduleError(
        "water_balance", "infeasible even with elastic power balance")
