import numpy as np
import pytest

from hydrores.lp import (BINARY, EQUAL, GREATER_EQUAL, LESS_EQUAL, MAXIMIZE,
                         MINIMIZE, LinearProgram, ModelError, SolveOptions,
                         SolveStatus, solve)


def test_simple_lp_minimize():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=2.0)
    y = lp.add_variable("y", lb=0.0, obj=3.0)
    lp.add_constraint("cover", [(x, 1.0), (y, 1.0)], GREATER_EQUAL, 4.0)
    res = solve(lp)
    assert res.status is SolveStatus.OPTIMAL
    assert res.objective == pytest.approx(8.0)
    assert res.value("x") == pytest.approx(4.0)
    assert res.value("y") == pytest.approx(0.0)


def test_dual_sign_convention_min():
    # min -x s.t. x <= 2: obj = -b, so the sensitivity d(obj)/db = -1.
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=-1.0)
    lp.add_constraint("cap", [(x, 1.0)], LESS_EQUAL, 2.0)
    res = solve(lp)
    assert res.objective == pytest.approx(-2.0)
    assert res.dual_value("cap") == pytest.approx(-1.0)


def test_dual_sign_convention_max():
    # max x s.t. x <= 2: d(obj)/db = +1 in the stated (max) sense.
    lp = LinearProgram("t", MAXIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=1.0)
    lp.add_constraint("cap", [(x, 1.0)], LESS_EQUAL, 2.0)
    res = solve(lp)
    assert res.objective == pytest.approx(2.0)
    assert res.dual_value("cap") == pytest.approx(1.0)


def test_dual_sign_convention_geq_row():
    # min x s.t. x >= 3: relaxing b downward lowers cost, d(obj)/db = +1.
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=1.0)
    lp.add_constraint("floor", [(x, 1.0)], GREATER_EQUAL, 3.0)
    res = solve(lp)
    assert res.objective == pytest.approx(3.0)
    assert res.dual_value("floor") == pytest.approx(1.0)


def test_equality_row_dual():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=5.0)
    lp.add_constraint("fix", [(x, 1.0)], EQUAL, 2.0)
    res = solve(lp)
    assert res.objective == pytest.approx(10.0)
    assert res.dual_value("fix") == pytest.approx(5.0)


def test_infeasible_status():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=1.0)
    lp.add_constraint("bad", [(x, 1.0)], LESS_EQUAL, -1.0)
    res = solve(lp)
    assert res.status is SolveStatus.INFEASIBLE


def test_unbounded_status():
    lp = LinearProgram("t", MAXIMIZE)
    lp.add_variable("x", lb=0.0, obj=1.0)
    res = solve(lp)
    assert res.status is SolveStatus.UNBOUNDED


def test_binary_knapsack_exact():
    lp = LinearProgram("t", MAXIMIZE)
    values = [6.0, 10.0, 12.0]
    weights = [1.0, 2.0, 3.0]
    idx = [lp.add_variable(f"x{i}", kind=BINARY, obj=values[i])
           for i in range(3)]
    lp.add_constraint("w", [(idx[i], weights[i]) for i in range(3)],
                      LESS_EQUAL, 5.0)
    res = solve(lp)
    assert res.status is SolveStatus.OPTIMAL
    assert res.objective == pytest.approx(22.0)
    x = [res.value(f"x{i}") for i in range(3)]
    assert [round(v) for v in x] == [0, 1, 1]
    # integrality within tolerance
    assert all(abs(v - round(v)) <= 1e-9 for v in x)


def test_milp_has_no_duals():
    lp = LinearProgram("t", MAXIMIZE)
    x = lp.add_variable("x", kind=BINARY, obj=1.0)
    lp.add_constraint("c", [(x, 1.0)], LESS_EQUAL, 1.0)
    res = solve(lp)
    assert res.dual is None or len(res.dual) == 0


def test_set_rhs_resolve_matches_fresh_build():
    def build(rhs):
        lp = LinearProgram("t", MINIMIZE)
        x = lp.add_variable("x", lb=0.0, obj=1.0)
        y = lp.add_variable("y", lb=0.0, obj=2.0)
        lp.add_constraint("c1", [(x, 1.0), (y, 1.0)], GREATER_EQUAL, rhs)
        lp.add_constraint("c2", [(x, 1.0)], LESS_EQUAL, 3.0)
        return lp

    lp = build(5.0)
    solve(lp)
    lp.set_rhs("c1", 9.0)
    patched = solve(lp)
    fresh = solve(build(9.0))
    assert patched.objective == pytest.approx(fresh.objective, abs=1e-9)


def test_set_bounds_resolve():
    lp = LinearProgram("t", MAXIMIZE)
    x = lp.add_variable("x", lb=0.0, ub=10.0, obj=1.0)
    assert solve(lp).objective == pytest.approx(10.0)
    lp.set_bounds("x", 0.0, 4.0)
    assert solve(lp).objective == pytest.approx(4.0)


def test_add_term_extends_constraint():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=0.0, obj=1.0)
    lp.add_constraint("floor", [(x, 1.0)], GREATER_EQUAL, 5.0)
    y = lp.add_variable("y", lb=0.0, obj=0.5)
    lp.add_term("floor", y, 1.0)
    res = solve(lp)
    # y now covers the floor at half the cost
    assert res.objective == pytest.approx(2.5)


def test_duplicate_variable_rejected():
    lp = LinearProgram("t", MINIMIZE)
    lp.add_variable("x")
    with pytest.raises(ModelError):
        lp.add_variable("x")


def test_duplicate_constraint_rejected():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x")
    lp.add_constraint("c", [(x, 1.0)], LESS_EQUAL, 1.0)
    with pytest.raises(ModelError):
        lp.add_constraint("c", [(x, 1.0)], LESS_EQUAL, 2.0)


def test_crossed_bounds_rejected():
    lp = LinearProgram("t", MINIMIZE)
    with pytest.raises(ModelError):
        lp.add_variable("x", lb=2.0, ub=1.0)


def test_unknown_variable_in_constraint_rejected():
    lp = LinearProgram("t", MINIMIZE)
    lp.add_variable("x")
    with pytest.raises(ModelError):
        lp.add_constraint("c", [(5, 1.0)], LESS_EQUAL, 1.0)


def test_objective_constant_and_sense():
    lp = LinearProgram("t", MAXIMIZE)
    x = lp.add_variable("x", lb=0.0, ub=3.0, obj=2.0)
    lp.objective_constant = 7.0
    res = solve(lp)
    assert res.objective == pytest.approx(13.0)


def test_verification_residuals_within_tolerance(c2):
    # the verifier runs on every optimal solve; a large cascade LP
    # exercises it end to end
    from hydrores.dayahead import build_day_ahead
    topology, grid, costs = c2
    lp = build_day_ahead(topology, grid, costs)
    res = solve(lp, SolveOptions(feasibility_tol=1e-6, duality_tol=1e-6))
    assert res.status is SolveStatus.OPTIMAL


def test_solve_result_value_lookup():
    lp = LinearProgram("t", MINIMIZE)
    x = lp.add_variable("x", lb=1.0, ub=1.0, obj=1.0)
    res = solve(lp)
    assert res.value("x") == pytest.approx(1.0)
    with pytest.raises(KeyError):
        res.value("missing")
