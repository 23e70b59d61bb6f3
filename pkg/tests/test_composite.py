import numpy as np
import pytest

from hydrores.composite import (ModelSpec, solve_mixed, solve_stochastic,
                                solve_unified)
from hydrores.dayahead import solve_day_ahead
from hydrores.balancing import solve_balancing
from hydrores.ccg import solve_robust
from hydrores.uncertainty import NetLoadScenario, UncertaintySet


def scenarios_c2():
    return [NetLoadScenario(np.full(4, d), 0.25, "manual")
            for d in (-4.0, -1.0, 2.0, 5.0)]


def test_model_spec_validation():
    ModelSpec(kind="deterministic").validate()
    ModelSpec(kind="stochastic", scenario_path="s.csv").validate()
    ModelSpec(kind="robust", lambda_max=5.0, gamma=2).validate()
    with pytest.raises(ValueError):
        ModelSpec(kind="volatile").validate()
    with pytest.raises(ValueError):
        ModelSpec(kind="stochastic").validate()  # needs scenarios
    with pytest.raises(ValueError):
        ModelSpec(kind="robust", lambda_max=5.0).validate()  # needs gamma
    with pytest.raises(ValueError):
        ModelSpec(kind="unified", beta=1.5, lambda_max=5.0, gamma=2,
                  scenario_path="s.csv").validate()
    with pytest.raises(ValueError):
        ModelSpec(kind="mixed", scenario_path="s.csv").validate()  # needs beta


def test_stochastic_nominal_singleton_equals_deterministic(c2):
    topology, grid, costs = c2
    det_sched, det_res = solve_day_ahead(topology, grid, costs)
    sol = solve_stochastic(topology, grid, costs,
                           [NetLoadScenario(np.zeros(4), 1.0)])
    # joint optimization can only match or improve on sequential
    # dispatch-then-balance of the deterministic schedule
    nominal = solve_balancing(topology, grid, costs, det_sched, np.zeros(4))
    sequential = det_res.objective + nominal.objective
    assert sol.objective <= sequential + 1e-6
    # and at zero deviation they coincide: the deterministic dispatch is
    # optimal for both stages at once
    assert sol.objective == pytest.approx(sequential, abs=1e-6)


def test_stochastic_duplicate_scenario_halved_probability(c2):
    topology, grid, costs = c2
    single = solve_stochastic(topology, grid, costs,
                              [NetLoadScenario([4.0, 0.0, -2.0, 0.0], 1.0)])
    doubled = solve_stochastic(
        topology, grid, costs,
        [NetLoadScenario([4.0, 0.0, -2.0, 0.0], 0.5),
         NetLoadScenario([4.0, 0.0, -2.0, 0.0], 0.5)])
    assert doubled.objective == pytest.approx(single.objective, abs=1e-6)


def test_stochastic_requires_unit_mass(c2):
    topology, grid, costs = c2
    with pytest.raises(ValueError):
        solve_stochastic(topology, grid, costs,
                         [NetLoadScenario(np.zeros(4), 0.5)])


def test_stochastic_beats_fixed_deterministic_schedule(c2):
    topology, grid, costs = c2
    scen = scenarios_c2()
    sol = solve_stochastic(topology, grid, costs, scen)
    gridR = grid.with_reserve_req(3.0)
    det_sched, _ = solve_day_ahead(topology, gridR, costs)
    fixed = sum(s.probability
                * solve_balancing(topology, grid, costs, det_sched,
                                  s.deltas).objective
                for s in scen)
    fixed += det_sched.first_stage_cost \
        + costs.reserve_epsilon * float(np.sum(det_sched.reserve))
    # evaluating any fixed feasible first stage upper-bounds the optimum
    assert sol.objective <= fixed + 1e-6


def test_stochastic_outcomes_per_scenario(c2):
    topology, grid, costs = c2
    scen = scenarios_c2()
    sol = solve_stochastic(topology, grid, costs, scen)
    assert len(sol.outcomes) == len(scen)
    values = sol.scenario_values
    mix = sum(s.probability * v for s, v in zip(scen, values))
    assert sol.objective == pytest.approx(
        sol.schedule.first_stage_cost
        + costs.reserve_epsilon * float(np.sum(sol.schedule.reserve)) + mix,
        abs=1e-6 * (1 + abs(sol.objective)))


def test_mixed_weights_override_stored_probabilities(c2):
    topology, grid, costs = c2
    scen = scenarios_c2()
    j_even = [NetLoadScenario([6.0, 0.0, 0.0, 0.0], 0.5, "robust"),
              NetLoadScenario([0.0, 6.0, 0.0, 0.0], 0.5, "robust")]
    j_skew = [NetLoadScenario([6.0, 0.0, 0.0, 0.0], 0.9, "robust"),
              NetLoadScenario([0.0, 6.0, 0.0, 0.0], 0.1, "robust")]
    a = solve_mixed(topology, grid, costs, scen, j_even, beta=0.4)
    b = solve_mixed(topology, grid, costs, scen, j_skew, beta=0.4)
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_mixed_beta_monotone_between_extremes(c2, c2_uset):
    topology, grid, costs = c2
    scen = scenarios_c2()
    rob = solve_robust(topology, grid, costs, c2_uset, tol=1e-6)
    objs = [solve_mixed(topology, grid, costs, scen, rob.scenarios, beta=b
                        ).objective for b in (0.0, 0.5, 1.0)]
    lo, mid, hi = sorted(objs)
    assert objs[1] == pytest.approx(mid)


def test_unified_beta_one_equals_stochastic(c2, c2_uset):
    topology, grid, costs = c2
    scen = scenarios_c2()
    st = solve_stochastic(topology, grid, costs, scen)
    un = solve_unified(topology, grid, costs, scen, c2_uset, beta=1.0,
                       tol=1e-6)
    assert un.objective == pytest.approx(st.objective, abs=1e-6)


def test_unified_keeps_scenario_blocks_at_beta_zero(c2, c2_uset):
    topology, grid, costs = c2
    scen = scenarios_c2()
    un = solve_unified(topology, grid, costs, scen, c2_uset, beta=0.0,
                       tol=1e-7)
    rob = solve_robust(topology, grid, costs, c2_uset, tol=1e-7)
    assert un.objective == pytest.approx(rob.objective, abs=1e-7 + 1e-6)
    assert un.trace is not None


def test_unified_scenarios_tagged_robust(c2, c2_uset):
    topology, grid, costs = c2
    un = solve_unified(topology, grid, costs, scenarios_c2(), c2_uset,
                       beta=0.5, tol=1e-6)
    for s in un.scenarios:
        assert s.origin == "robust"


def test_mixed_scenario_values_decompose(c2, c2_uset):
    topology, grid, costs = c2
    scen = scenarios_c2()
    rob = solve_robust(topology, grid, costs, c2_uset, tol=1e-6)
    beta = 0.3
    sol = solve_mixed(topology, grid, costs, scen, rob.scenarios, beta=beta)
    eps = costs.reserve_epsilon * float(np.sum(sol.schedule.reserve))
    total = sol.schedule.first_stage_cost + eps
    total += beta * sum(s.probability * v
                        for s, v in zip(scen, sol.scenario_values))
    total += (1 - beta) / len(rob.scenarios) * sum(
        o.objective for o in sol.robust_outcomes)
    assert sol.objective == pytest.approx(
        total, abs=1e-6 * (1 + abs(sol.objective)))
