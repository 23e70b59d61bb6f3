"""Balancing stage: re-dispatch after the net-load deviation realizes.

Three forms of the same problem live here:

* the primal LP for a fixed schedule and a fixed deviation vector, used to
  price a scenario;
* the perfect-foresight relaxation, where production may move anywhere in
  [0, P] instead of the reserve box, used to normalize simulated costs;
* the dual of the primal with the deviation left free inside the budgeted
  set, a maximization MILP that finds the worst-case deviation for a given
  schedule.

The dual is derived by hand from the primal below and checked by strong
duality in the test suite. Because load can always be shed and water can
always be routed through spill gates, the primal is feasible for every
deviation (complete recourse), so the dual is bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dayahead import FirstStageHandles, _add_routing_rows, recompute_volumes
from .lp import (EQUAL, GREATER_EQUAL, LESS_EQUAL, MAXIMIZE, LinearProgram,
                 SolveOptions, SolveResult, SolveStatus, solve)
from .system import (CostParams, Schedule, TimeGrid, Topology,
                     MM3_PER_M3S_HOUR)
from .uncertainty import UncertaintySet, enumerate_deviations


@dataclass
class BalancingOutcome:
    """Optimal second-stage point for one deviation vector."""

    module_ids: list[str]
    production: np.ndarray       # re-dispatch, [module, period]
    discharge: list[np.ndarray]  # per-module (segments, T)
    bypass: np.ndarray
    spill: np.ndarray
    flow_in: np.ndarray
    flow_out: np.ndarray
    volume: np.ndarray           # [module, 0..T]
    shed: np.ndarray             # unserved load per period, MW
    surplus: np.ndarray          # surplus power per period, MW
    objective: float

    @property
    def T(self) -> int:
        return self.production.shape[1]


@dataclass
class WorstCase:
    deltas: np.ndarray    # worst deviation found, entries in {-lam, 0, +lam}
    value: float          # its balancing cost for the given schedule
    dev_up: np.ndarray    # binary pattern, upward deviations
    dev_down: np.ndarray


@dataclass
class BlockHandles:
    """Variable indices of one balancing block inside a larger program."""

    prefix: str
    qd: list[np.ndarray]
    qb: np.ndarray
    qo: np.ndarray
    qin: np.ndarray
    qout: np.ndarray
    p: np.ndarray
    v: np.ndarray
    shed: np.ndarray
    surplus: np.ndarray
    cost_terms: list[tuple[int, float]]  # unweighted Z^bal expression

    def stage_cost(self, x: np.ndarray) -> float:
        """Z^bal of this block evaluated at a solution vector."""
        return float(sum(c * x[i] for i, c in self.cost_terms))


def add_balancing_block(lp: LinearProgram, topology: Topology, grid: TimeGrid,
                        costs: CostParams, prefix: str, deltas,
                        weight: float = 1.0,
                        first_stage: Optional[FirstStageHandles] = None,
                        schedule: Optional[Schedule] = None,
                        relax_production_box: bool = False) -> BlockHandles:
    """Append one balancing block and return its handles.

    The production box is tied to first-stage variables (extensive forms),
    to a fixed schedule's numbers (scenario pricing), or relaxed to [0, P]
    (perfect foresight) depending on which of `first_stage`, `schedule`,
    `relax_production_box` is given. Objective contribution is
    weight * Z^bal; pass weight 0 for blocks priced through an epigraph row.
    """
    modes = sum([first_stage is not None, schedule is not None,
                 bool(relax_production_box)])
    if modes != 1:
        raise ValueError("exactly one production-box mode must be selected")
    T = grid.T
    M = len(topology)
    F = grid.period_hours
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (T,):
        raise ValueError(f"deviation vector has shape {deltas.shape}, expected ({T},)")

    qd: list[np.ndarray] = []
    qb = np.empty((M, T), dtype=np.int64)
    qo = np.empty((M, T), dtype=np.int64)
    qin = np.empty((M, T), dtype=np.int64)
    qout = np.empty((M, T), dtype=np.int64)
    p = np.empty((M, T), dtype=np.int64)
    v = np.empty((M, T + 1), dtype=np.int64)
    cost: list[tuple[int, float]] = []

    for i, m in enumerate(topology):
        seg_idx = np.empty((len(m.segments), T), dtype=np.int64)
        for n, seg in enumerate(m.segments):
            for t in range(T):
                seg_idx[n, t] = lp.add_variable(
                    f"{prefix}qd[{m.id},{n},{t}]", 0.0, seg.max_discharge)
        qd.append(seg_idx)
        for t in range(T):
            qb[i, t] = lp.add_variable(
                f"{prefix}qb[{m.id},{t}]", 0.0, m.max_bypass,
                obj=weight * F[t] * costs.bypass_penalty)
            cost.append((int(qb[i, t]), F[t] * costs.bypass_penalty))
            qo[i, t] = lp.add_variable(
                f"{prefix}qo[{m.id},{t}]", 0.0, m.max_spill,
                obj=weight * F[t] * costs.spill_penalty)
            cost.append((int(qo[i, t]), F[t] * costs.spill_penalty))
            qin[i, t] = lp.add_variable(f"{prefix}qin[{m.id},{t}]")
            qout[i, t] = lp.add_variable(f"{prefix}qout[{m.id},{t}]")
            if relax_production_box or first_stage is not None:
                p_ub = m.max_production
            else:
                p_ub = np.inf  # box rows below carry the schedule's limits
            p[i, t] = lp.add_variable(f"{prefix}p[{m.id},{t}]", 0.0, p_ub)
        v[i, 0] = lp.add_variable(f"{prefix}v[{m.id},0]",
                                  m.initial_volume, m.initial_volume)
        for t in range(1, T + 1):
            coeff = -m.water_value if t == T else 0.0
            v[i, t] = lp.add_variable(f"{prefix}v[{m.id},{t}]", 0.0,
                                      m.max_volume, obj=weight * coeff)
            if t == T:
                cost.append((int(v[i, t]), coeff))

    shed = np.empty(T, dtype=np.int64)
    surplus = np.empty(T, dtype=np.int64)
    for t in range(T):
        shed[t] = lp.add_variable(f"{prefix}shed[{t}]", 0.0, np.inf,
                                  obj=weight * costs.load_shed)
        cost.append((int(shed[t]), costs.load_shed))
        surplus[t] = lp.add_variable(f"{prefix}surplus[{t}]", 0.0, np.inf,
                                     obj=weight * costs.power_spill)
        cost.append((int(surplus[t]), costs.power_spill))

    _add_routing_rows(lp, topology, grid, prefix, qd, qb, qo, qin, qout, v,
                      deltas=None)

    for i, m in enumerate(topology):
        for t in range(T):
            coeffs = [(p[i, t], 1.0)]
            coeffs += [(qd[i][n, t], -m.segments[n].energy_coeff)
                       for n in range(len(m.segments))]
            lp.add_constraint(f"{prefix}production[{m.id},{t}]", coeffs, EQUAL, 0.0)

    for t in range(T):
        coeffs = [(p[i, t], 1.0) for i in range(M)]
        coeffs += [(int(shed[t]), 1.0), (int(surplus[t]), -1.0)]
        lp.add_constraint(f"{prefix}power_balance[{t}]", coeffs, EQUAL,
                          grid.net_load[t] + deltas[t])

    if first_stage is not None:
        for i, m in enumerate(topology):
            for t in range(T):
                lp.add_constraint(
                    f"{prefix}redispatch_up[{m.id},{t}]",
                    [(p[i, t], 1.0), (first_stage.p[i, t], -1.0),
                     (first_stage.r[i, t], -1.0)],
                    LESS_EQUAL, 0.0)
                lp.add_constraint(
                    f"{prefix}redispatch_dn[{m.id},{t}]",
                    [(p[i, t], 1.0), (first_stage.p[i, t], -1.0),
                     (first_stage.r[i, t], 1.0)],
                    GREATER_EQUAL, 0.0)
    elif schedule is not None:
        for i, m in enumerate(topology):
            for t in range(T):
                lp.add_constraint(
                    f"{prefix}redispatch_up[{m.id},{t}]", [(p[i, t], 1.0)],
                    LESS_EQUAL, schedule.production[i, t] + schedule.reserve[i, t])
                lp.add_constraint(
                    f"{prefix}redispatch_dn[{m.id},{t}]", [(p[i, t], 1.0)],
                    GREATER_EQUAL, schedule.production[i, t] - schedule.reserve[i, t])

    return BlockHandles(prefix, qd, qb, qo, qin, qout, p, v, shed, surplus, cost)


def build_balancing_primal(topology: Topology, grid: TimeGrid, costs: CostParams,
                           schedule: Schedule, deltas) -> LinearProgram:
    """Balancing LP for a fixed schedule and deviation vector."""
    lp = LinearProgram(name="balancing")
    add_balancing_block(lp, topology, grid, costs, "", deltas, weight=1.0,
                        schedule=schedule)
    return lp


def build_perfect_foresight(topology: Topology, grid: TimeGrid,
                            costs: CostParams, deltas) -> LinearProgram:
    """Balancing LP with the production box relaxed to [0, max_production]."""
    lp = LinearProgram(name="perfect_foresight")
    add_balancing_block(lp, topology, grid, costs, "", deltas, weight=1.0,
                        relax_production_box=True)
    return lp


def extract_outcome(x: np.ndarray, handles: BlockHandles, topology: Topology,
                    grid: TimeGrid, objective: float) -> BalancingOutcome:
    """Read one block out of a solution vector; volumes are recomputed."""
    flow_in = x[handles.qin]
    flow_out = x[handles.qout]
    volume = recompute_volumes(topology, grid, flow_in, flow_out)
    drift = np.abs(volume - x[handles.v]).max()
    if drift > 1e-6:
        raise RuntimeError(f"balancing volumes drift {drift:.3e} Mm3 from solver")
    return BalancingOutcome(
        module_ids=[m.id for m in topology],
        production=x[handles.p],
        discharge=[x[idx] for idx in handles.qd],
        bypass=x[handles.qb], spill=x[handles.qo],
        flow_in=flow_in, flow_out=flow_out, volume=volume,
        shed=x[handles.shed], surplus=x[handles.surplus],
        objective=objective)


def check_outcome(outcome: BalancingOutcome, schedule: Optional[Schedule],
                  grid: TimeGrid, deltas, tol: float = 1e-6) -> None:
    """Assert the second-stage invariants; raises on violation."""
    deltas = np.asarray(deltas, dtype=float)
    residual = np.abs(outcome.production.sum(axis=0) + outcome.shed
                      - outcome.surplus - np.asarray(grid.net_load) - deltas)
    if residual.max() > tol:
        raise RuntimeError(f"balancing power residual {residual.max():.3e} MW")
    if min(outcome.shed.min(), outcome.surplus.min()) < -tol:
        raise RuntimeError("negative shed or surplus")
    if schedule is not None:
        hi = outcome.production - schedule.production - schedule.reserve
        lo = schedule.production - schedule.reserve - outcome.production
        worst = max(hi.max(), lo.max())
        if worst > tol:
            raise RuntimeError(f"re-dispatch leaves the reserve box by {worst:.3e} MW")


def solve_balancing(topology: Topology, grid: TimeGrid, costs: CostParams,
                    schedule: Schedule, deltas,
                    options: Optional[SolveOptions] = None) -> BalancingOutcome:
    lp = LinearProgram(name="balancing")
    handles = add_balancing_block(lp, topology, grid, costs, "", deltas,
                                  weight=1.0, schedule=schedule)
    result = solve(lp, options)
    if result.status is not SolveStatus.OPTIMAL:
        raise RuntimeError(
            f"balancing LP unexpectedly {result.status.value}; "
            "complete recourse should make it optimal")
    outcome = extract_outcome(result.x, handles, topology, grid, result.objective)
    check_outcome(outcome, schedule, grid, deltas)
    recomputed = handles.stage_cost(result.x)
    if abs(recomputed - result.objective) > 1e-6 * (1 + abs(result.objective)):
        raise RuntimeError("balancing cost recomputation mismatch")
    return outcome


# ---------------------------------------------------------------------------
# Dual form. One dual variable per primal row, one dual row per primal
# column. With all primal variables >= 0 and the primal minimizing, the dual
# maximizes rhs'phi subject to A'phi <= c, with phi free on equality rows,
# <= 0 on <= rows and >= 0 on >= rows.
#
# Primal rows (fixed schedule; module m, period t; kappa_t = 0.0036 F_t):
#   flow_in[m,t]   qin - sum(upstream outflows into m)                 = 0
#   flow_out[m,t]  qout - sum_n qd[m,n] - qb - qo                      = 0
#   volume[m,t]    v[t+1] - v[t] - kappa_t qin + kappa_t qout          = kappa_t I
#   (v[m,0] fixed to V0 is treated as row init[m]: v[m,0] = V0)
#   production     p - sum_n E_mn qd[m,n]                              = 0
#   power_balance  sum_m p + shed - surplus                            = L_t + delta_t
#   redispatch_up  p <= schedule.p + schedule.r
#   redispatch_dn  p >= schedule.p - schedule.r
#   caps           v[m,tau] <= V (tau>=1), qd <= Qd, qb <= Qb, qo <= Qo
#
# Dual rows below mirror the primal columns one to one; the shed and surplus
# columns collapse to bounds on the power-balance dual (the balancing price):
# -power_spill <= price_t <= load_shed. That bound is what makes the big-M
# linearization of price * deviation exact.
# ---------------------------------------------------------------------------

def _add_dual_core(lp: LinearProgram, topology: Topology, grid: TimeGrid,
                   costs: CostParams, schedule: Schedule):
    """Dual variables, feasibility rows and deviation-independent objective."""
    T = grid.T
    F = grid.period_hours
    M = len(topology)
    inf = np.inf

    d_fin = np.empty((M, T), dtype=np.int64)
    d_fout = np.empty((M, T), dtype=np.int64)
    d_init = np.empty(M, dtype=np.int64)
    d_vol = np.empty((M, T), dtype=np.int64)
    d_prod = np.empty((M, T), dtype=np.int64)
    price = np.empty(T, dtype=np.int64)
    d_up = np.empty((M, T), dtype=np.int64)
    d_dn = np.empty((M, T), dtype=np.int64)
    d_vcap = np.empty((M, T), dtype=np.int64)   # volume caps, tau = 1..T
    d_qd = []
    d_qb = np.empty((M, T), dtype=np.int64)
    d_qo = np.empty((M, T), dtype=np.int64)

    for i, m in enumerate(topology):
        d_init[i] = lp.add_variable(f"dual_init_volume[{m.id}]", -inf, inf,
                                    obj=m.initial_volume)
        for t in range(T):
            d_fin[i, t] = lp.add_variable(f"dual_flow_in[{m.id},{t}]", -inf, inf)
            d_fout[i, t] = lp.add_variable(f"dual_flow_out[{m.id},{t}]", -inf, inf)
            k = MM3_PER_M3S_HOUR * F[t]
            d_vol[i, t] = lp.add_variable(f"dual_volume[{m.id},{t}]", -inf, inf,
                                          obj=k * m.inflow[t])
            d_prod[i, t] = lp.add_variable(f"dual_production[{m.id},{t}]", -inf, inf)
            d_up[i, t] = lp.add_variable(
                f"dual_redispatch_up[{m.id},{t}]", -inf, 0.0,
                obj=schedule.production[i, t] + schedule.reserve[i, t])
            d_dn[i, t] = lp.add_variable(
                f"dual_redispatch_dn[{m.id},{t}]", 0.0, inf,
                obj=schedule.production[i, t] - schedule.reserve[i, t])
            d_vcap[i, t] = lp.add_variable(
                f"dual_volume_cap[{m.id},{t + 1}]", -inf, 0.0, obj=m.max_volume)
        seg_idx = np.empty((len(m.segments), T), dtype=np.int64)
        for n, seg in enumerate(m.segments):
            for t in range(T):
                seg_idx[n, t] = lp.add_variable(
                    f"dual_discharge_cap[{m.id},{n},{t}]", -inf, 0.0,
                    obj=seg.max_discharge)
        d_qd.append(seg_idx)
        for t in range(T):
            d_qb[i, t] = lp.add_variable(f"dual_bypass_cap[{m.id},{t}]",
                                         -inf, 0.0, obj=m.max_bypass)
            d_qo[i, t] = lp.add_variable(f"dual_spill_cap[{m.id},{t}]",
                                         -inf, 0.0, obj=m.max_spill)

    # Balancing price; bounds come from the shed and surplus columns.
    for t in range(T):
        price[t] = lp.add_variable(f"price[{t}]",
                                   -costs.power_spill, costs.load_shed)

    for i, m in enumerate(topology):
        tgt_d = topology.index.get(m.discharge_to) if m.discharge_to else None
        tgt_b = topology.index.get(m.bypass_to) if m.bypass_to else None
        tgt_o = topology.index.get(m.spill_to) if m.spill_to else None
        for t in range(T):
            k = MM3_PER_M3S_HOUR * F[t]
            for n, seg in enumerate(m.segments):
                coeffs = [(d_fout[i, t], -1.0),
                          (d_prod[i, t], -seg.energy_coeff),
                          (d_qd[i][n, t], 1.0)]
                if tgt_d is not None:
                    coeffs.append((d_fin[tgt_d, t], -1.0))
                lp.add_constraint(f"col_qd[{m.id},{n},{t}]", coeffs,
                                  LESS_EQUAL, 0.0)
            coeffs = [(d_fout[i, t], -1.0), (d_qb[i, t], 1.0)]
            if tgt_b is not None:
                coeffs.append((d_fin[tgt_b, t], -1.0))
            lp.add_constraint(f"col_qb[{m.id},{t}]", coeffs, LESS_EQUAL,
                              F[t] * costs.bypass_penalty)
            coeffs = [(d_fout[i, t], -1.0), (d_qo[i, t], 1.0)]
            if tgt_o is not None:
                coeffs.append((d_fin[tgt_o, t], -1.0))
            lp.add_constraint(f"col_qo[{m.id},{t}]", coeffs, LESS_EQUAL,
                              F[t] * costs.spill_penalty)
            lp.add_constraint(f"col_qin[{m.id},{t}]",
                              [(d_fin[i, t], 1.0), (d_vol[i, t], -k)],
                              LESS_EQUAL, 0.0)
            lp.add_constraint(f"col_qout[{m.id},{t}]",
                              [(d_fout[i, t], 1.0), (d_vol[i, t], k)],
                              LESS_EQUAL, 0.0)
            lp.add_constraint(f"col_p[{m.id},{t}]",
                              [(d_prod[i, t], 1.0), (price[t], 1.0),
                               (d_up[i, t], 1.0), (d_dn[i, t], 1.0)],
                              LESS_EQUAL, 0.0)
        lp.add_constraint(f"col_v[{m.id},0]",
                          [(d_init[i], 1.0), (d_vol[i, 0], -1.0)],
                          LESS_EQUAL, 0.0)
        for tau in range(1, T):
            lp.add_constraint(f"col_v[{m.id},{tau}]",
                              [(d_vol[i, tau - 1], 1.0), (d_vol[i, tau], -1.0),
                               (d_vcap[i, tau - 1], 1.0)],
                              LESS_EQUAL, 0.0)
        lp.add_constraint(f"col_v[{m.id},{T}]",
                          [(d_vol[i, T - 1], 1.0), (d_vcap[i, T - 1], 1.0)],
                          LESS_EQUAL, -m.water_value)
    return price


def build_balancing_dual(topology: Topology, grid: TimeGrid, costs: CostParams,
                         schedule: Schedule, deltas) -> LinearProgram:
    """Dual LP of the balancing primal at a fixed deviation vector.

    Exists to certify the dual derivation: its optimal value must equal the
    primal's by strong duality.
    """
    deltas = np.asarray(deltas, dtype=float)
    lp = LinearProgram(name="balancing_dual", sense=MAXIMIZE)
    price = _add_dual_core(lp, topology, grid, costs, schedule)
    for t in range(grid.T):
        lp.set_objective_coeff(int(price[t]), grid.net_load[t] + deltas[t])
    return lp


def build_worst_case_milp(topology: Topology, grid: TimeGrid, costs: CostParams,
                          schedule: Schedule,
                          uset: UncertaintySet) -> LinearProgram:
    """Worst-deviation search: maximize the dual over the budgeted set.

    The product price_t * delta_t is linearized exactly through
    w_t = u_t * price_t using the price bounds [-power_spill, load_shed];
    no heuristic big-M constants enter the model.
    """
    lam, gamma = uset.lambda_max, uset.gamma
    lo, hi = -costs.power_spill, costs.load_shed
    lp = LinearProgram(name="worst_case", sense=MAXIMIZE)
    price = _add_dual_core(lp, topology, grid, costs, schedule)
    T = grid.T
    for t in range(T):
        lp.set_objective_coeff(int(price[t]), grid.net_load[t])

    dev, w = {}, {}
    for side, sign in (("up", 1.0), ("down", -1.0)):
        for t in range(T):
            dev[side, t] = lp.add_variable(f"dev_{side}[{t}]", kind="binary")
            w[side, t] = lp.add_variable(f"price_dev_{side}[{t}]", lo, hi,
                                         obj=sign * lam)
    for side in ("up", "down"):
        for t in range(T):
            u, wt = dev[side, t], w[side, t]
            # u=0 forces w=0; u=1 forces w=price. All four rows use the
            # structural price bounds, so the linearization is exact.
            lp.add_constraint(f"lin_{side}_off_hi[{t}]",
                              [(wt, 1.0), (u, -hi)], LESS_EQUAL, 0.0)
            lp.add_constraint(f"lin_{side}_off_lo[{t}]",
                              [(wt, -1.0), (u, lo)], LESS_EQUAL, 0.0)
            lp.add_constraint(f"lin_{side}_on_hi[{t}]",
                              [(wt, 1.0), (int(price[t]), -1.0), (u, -lo)],
                              LESS_EQUAL, -lo)
            lp.add_constraint(f"lin_{side}_on_lo[{t}]",
                              [(wt, -1.0), (int(price[t]), 1.0), (u, hi)],
                              LESS_EQUAL, hi)
    for t in range(T):
        lp.add_constraint(f"one_direction[{t}]",
                          [(dev["up", t], 1.0), (dev["down", t], 1.0)],
                          LESS_EQUAL, 1.0)
    lp.add_constraint(
        "deviation_budget",
        [(dev[s, t], 1.0) for s in ("up", "down") for t in range(T)],
        LESS_EQUAL, float(gamma))
    return lp


def solve_worst_case(topology: Topology, grid: TimeGrid, costs: CostParams,
                     schedule: Schedule, uset: UncertaintySet,
                     options: Optional[SolveOptions] = None) -> WorstCase:
    lp = build_worst_case_milp(topology, grid, costs, schedule, uset)
    result = solve(lp, options)
    if result.status is not SolveStatus.OPTIMAL:
        raise RuntimeError(
            f"worst-case search ended {result.status.value}; an unbounded "
            "dual means the primal lost complete recourse")
    T = grid.T
    up = np.array([round(result.value(f"dev_up[{t}]")) for t in range(T)],
                  dtype=np.int64)
    dn = np.array([round(result.value(f"dev_down[{t}]")) for t in range(T)],
                  dtype=np.int64)
    deltas = uset.lambda_max * (up - dn).astype(float)
    return WorstCase(deltas=deltas, value=result.objective, dev_up=up, dev_down=dn)


def worst_case_brute_force(topology: Topology, grid: TimeGrid, costs: CostParams,
                           schedule: Schedule, uset: UncertaintySet,
                           options: Optional[SolveOptions] = None
                           ) -> tuple[np.ndarray, float, list[float]]:
    """Exhaustive worst case by primal enumeration; the MILP's test oracle."""
    lp = build_balancing_primal(topology, grid, costs, schedule,
                                np.zeros(grid.T))
    best_val, best_delta, values = -np.inf, None, []
    for deltas in enumerate_deviations(uset, grid.T):
        for t in range(grid.T):
            lp.set_rhs(f"power_balance[{t}]", grid.net_load[t] + deltas[t])
        result = solve(lp, options)
        if result.status is not SolveStatus.OPTIMAL:
            raise RuntimeError(f"balancing LP {result.status.value} during enumeration")
        values.append(result.objective)
        if result.objective > best_val:
            best_val, best_delta = result.objective, deltas
    return best_delta, best_val, values
