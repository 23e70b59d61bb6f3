import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrores.balancing import (build_balancing_dual, build_balancing_primal,
                                build_perfect_foresight, build_worst_case_milp,
                                check_outcome, solve_balancing,
                                solve_worst_case, worst_case_brute_force)
from hydrores.dayahead import solve_day_ahead
from hydrores.lp import SolveStatus, solve
from hydrores.system import TimeGrid
from hydrores.uncertainty import UncertaintySet, enumerate_deviations


def test_c1_shed_price(c1):
    # reserve is zero so a +5 MW deviation is shed at 3000 mu/MW
    topology, grid, costs = c1
    schedule, _ = solve_day_ahead(topology, grid, costs)
    out = solve_balancing(topology, grid, costs, schedule, np.array([5.0]))
    assert out.objective == pytest.approx(-482.0 + 3000.0 * 5, abs=1e-6)
    assert out.shed[0] == pytest.approx(5.0, abs=1e-9)


def test_c1_surplus_price(c1):
    topology, grid, costs = c1
    schedule, _ = solve_day_ahead(topology, grid, costs)
    out = solve_balancing(topology, grid, costs, schedule, np.array([-5.0]))
    assert out.objective == pytest.approx(-482.0 + 1000.0 * 5, abs=1e-6)
    assert out.surplus[0] == pytest.approx(5.0, abs=1e-9)


def test_reserve_absorbs_deviation(c1):
    # with 2 MW of reserve, a +2 MW deviation is redispatched, not shed:
    # extra 1 m3/s of discharge costs 0.0036 Mm3 of water at 1000 mu/Mm3
    topology, _, costs = c1
    grid = TimeGrid([1.0], [10.0], [2.0])
    schedule, _ = solve_day_ahead(topology, grid, costs)
    base = solve_balancing(topology, grid, costs, schedule, np.array([0.0]))
    out = solve_balancing(topology, grid, costs, schedule, np.array([2.0]))
    assert out.shed[0] == pytest.approx(0.0, abs=1e-9)
    assert out.objective - base.objective == pytest.approx(3.6, abs=1e-6)


def test_strong_duality_fixed_deltas(c2, c2_uset, rng):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    for deltas in enumerate_deviations(c2_uset, grid.T)[:8]:
        primal = solve_balancing(topology, grid, costs, schedule, deltas)
        dual = solve(build_balancing_dual(topology, grid, costs, schedule,
                                          deltas))
        assert dual.status is SolveStatus.OPTIMAL
        assert dual.objective == pytest.approx(
            primal.objective, abs=1e-6 * (1 + abs(primal.objective)))


def test_perfect_foresight_relaxation(c2, c2_uset):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    boxed = build_balancing_primal(topology, grid, costs, schedule,
                                   np.zeros(grid.T))
    free = build_perfect_foresight(topology, grid, costs, np.zeros(grid.T))
    for deltas in enumerate_deviations(c2_uset, grid.T):
        for t in range(grid.T):
            rhs = grid.net_load[t] + deltas[t]
            boxed.set_rhs(f"power_balance[{t}]", rhs)
            free.set_rhs(f"power_balance[{t}]", rhs)
        zb = solve(boxed).objective
        zp = solve(free).objective
        assert zp <= zb + 1e-7


def test_outcome_invariants(c2):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    deltas = np.array([6.0, -6.0, 0.0, 0.0])
    out = solve_balancing(topology, grid, costs, schedule, deltas)
    check_outcome(out, schedule, grid, deltas)  # raises on violation


def test_complete_recourse_extreme_deviation(c2):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    deltas = np.array([500.0, -500.0, 500.0, -500.0])
    out = solve_balancing(topology, grid, costs, schedule, deltas)
    assert np.all(out.shed >= -1e-9)
    assert np.all(out.surplus >= -1e-9)


def test_worst_case_matches_brute_force_c1(c1):
    topology, grid, costs = c1
    schedule, _ = solve_day_ahead(topology, grid, costs)
    uset = UncertaintySet(5.0, 1)
    wc = solve_worst_case(topology, grid, costs, schedule, uset)
    _, best, values = worst_case_brute_force(topology, grid, costs, schedule,
                                             uset)
    assert wc.value == pytest.approx(best, abs=1e-6)
    assert len(values) == 3


def test_worst_case_structure(c2, c2_uset):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    wc = solve_worst_case(topology, grid, costs, schedule, c2_uset)
    # one direction per period, budget respected, vertex magnitudes
    assert np.all(wc.dev_up + wc.dev_down <= 1)
    assert wc.dev_up.sum() + wc.dev_down.sum() <= c2_uset.gamma
    assert set(np.unique(wc.deltas)) <= {-6.0, 0.0, 6.0}


def test_worst_case_gamma_zero(c2):
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    uset = UncertaintySet(6.0, 0)
    wc = solve_worst_case(topology, grid, costs, schedule, uset)
    nominal = solve_balancing(topology, grid, costs, schedule,
                              np.zeros(grid.T))
    assert np.all(wc.deltas == 0.0)
    assert wc.value == pytest.approx(nominal.objective, abs=1e-6)


def test_balancing_objective_recomputed(c2):
    # extract path recomputes the stage cost from primal values and ties
    # it to the solver objective
    topology, grid, costs = c2
    schedule, _ = solve_day_ahead(topology, grid, costs)
    out = solve_balancing(topology, grid, costs, schedule,
                          np.array([3.0, 0.0, -3.0, 0.0]))
    manual = (costs.load_shed * out.shed.sum()
              + costs.power_spill * out.surplus.sum())
    for m, module in enumerate(topology.modules):
        manual += sum(grid.period_hours[t]
                      * (costs.bypass_penalty * out.bypass[m][t]
                         + costs.spill_penalty * out.spill[m][t])
                      for t in range(grid.T))
        manual -= module.water_value * out.volume[m][-1]
    assert out.objective == pytest.approx(manual, abs=1e-6)


@settings(deadline=None, max_examples=15)
@given(st.lists(st.sampled_from([-6.0, -3.0, 0.0, 3.0, 6.0]),
                min_size=4, max_size=4))
def test_boxed_dominates_foresight(deltas):
    from conftest import make_c2
    topology, grid, costs = make_c2()
    schedule, _ = solve_day_ahead(topology, grid, costs)
    d = np.array(deltas)
    boxed = solve_balancing(topology, grid, costs, schedule, d)
    lp = build_perfect_foresight(topology, grid, costs, d)
    free = solve(lp)
    assert free.objective <= boxed.objective + 1e-7
