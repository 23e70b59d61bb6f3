import numpy as np
import pytest

import hydrores.simulator as sim_mod
from hydrores.dayahead import solve_day_ahead
from hydrores.simulator import (Baseline, CostEvaluator, balancing_cost,
                                compute_baseline, foresight_values,
                                procurement_cost, run_monte_carlo, sweep_beta,
                                write_samples_csv, write_summary_csv)
from hydrores.system import system_fingerprint
from hydrores.uncertainty import NetLoadScenario, sample


def test_baseline_is_reserve_free_optimum(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, res = solve_day_ahead(topology, grid, costs)
    assert base.cost == pytest.approx(sched.first_stage_cost, abs=1e-9)
    assert base.system_fingerprint == system_fingerprint(topology, grid,
                                                         costs)


def test_procurement_cost_nonnegative(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    gridR = grid.with_reserve_req(4.0)
    schedR, _ = solve_day_ahead(topology, gridR, costs)
    k = procurement_cost(topology, grid, costs, schedR, base)
    assert k >= 0.0


def test_procurement_fingerprint_mismatch(c2, c1):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    topo1, grid1, costs1 = c1
    sched1, _ = solve_day_ahead(topo1, grid1, costs1)
    with pytest.raises(ValueError):
        procurement_cost(topo1, grid1, costs1, sched1, base)


def test_procurement_negative_guard(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid, costs)
    fake = Baseline(cost=base.cost + 10.0,
                    system_fingerprint=base.system_fingerprint)
    with pytest.raises(RuntimeError):
        procurement_cost(topology, grid, costs, sched, fake)


def test_balancing_cost_nonnegative_and_consistent(c2):
    topology, grid, costs = c2
    sched, _ = solve_day_ahead(topology, grid.with_reserve_req(2.0), costs)
    ev = CostEvaluator(topology, grid, costs, sched)
    for d in ([6.0, 0.0, 0.0, 0.0], [0.0, -6.0, 6.0, 0.0], [0.0] * 4):
        b = ev.balancing_cost(np.array(d))
        assert b >= 0.0
        assert b == pytest.approx(
            balancing_cost(topology, grid, costs, sched, np.array(d)),
            abs=1e-9)


def test_run_monte_carlo_identity_and_reproducibility(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid.with_reserve_req(2.0), costs)
    rep = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="normal", count=40, seed=5)
    assert rep.samples == 40
    assert np.all(rep.balancing >= 0.0)
    # U_i = K + B_i exactly, by construction
    np.testing.assert_array_equal(rep.total, rep.procurement + rep.balancing)
    # stats recomputable from the retained samples
    assert rep.u_mean == pytest.approx(float(np.mean(rep.total)))
    assert rep.u_max == pytest.approx(float(np.max(rep.total)))
    assert rep.u_median == pytest.approx(float(np.median(rep.total)))
    assert rep.u_std == pytest.approx(float(np.std(rep.total, ddof=1)))
    rep2 = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                           dist="normal", count=40, seed=5)
    np.testing.assert_array_equal(rep.balancing, rep2.balancing)
    rep3 = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                           dist="normal", count=40, seed=6)
    assert not np.array_equal(rep.balancing, rep3.balancing)


def test_median_of_even_count_is_central_mean(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid, costs)
    rep = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="uniform", count=4, seed=9)
    t = np.sort(rep.total)
    assert rep.u_median == pytest.approx((t[1] + t[2]) / 2.0)


def test_single_sample_std_is_nan(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid, costs)
    rep = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="uniform", count=1, seed=9)
    assert np.isnan(rep.u_std)


def test_parallel_equals_sequential(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid.with_reserve_req(2.0), costs)
    seq = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="normal", count=30, seed=3, workers=1)
    par = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="normal", count=30, seed=3, workers=3)
    np.testing.assert_array_equal(seq.balancing, par.balancing)
    np.testing.assert_array_equal(seq.total, par.total)


def test_foresight_cache_equivalence(c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid, costs)
    fv = foresight_values(topology, grid, costs, "normal", 6.0, 25, seed=8)
    with_cache = run_monte_carlo(topology, grid, costs, sched, base,
                                 lambda_max=6.0, dist="normal", count=25,
                                 seed=8, foresight_cache=fv)
    without = run_monte_carlo(topology, grid, costs, sched, base,
                              lambda_max=6.0, dist="normal", count=25, seed=8)
    np.testing.assert_allclose(with_cache.balancing, without.balancing,
                               atol=1e-9)


def test_sweep_rows_and_failure_isolation(c2, c2_uset, monkeypatch):
    topology, grid, costs = c2
    scen = [NetLoadScenario(np.full(4, d), 1.0 / 3, "sampled")
            for d in (-3.0, 1.0, 4.0)]
    robust = [NetLoadScenario([6.0, 0.0, 0.0, 0.0], 0.5, "robust"),
              NetLoadScenario([0.0, 6.0, 0.0, 0.0], 0.5, "robust")]

    real = sim_mod.solve_mixed

    def flaky(topology, grid, costs, scenarios, robust_scenarios, beta,
              config=None, options=None):
        if beta == 0.5:
            raise RuntimeError("injected failure")
        return real(topology, grid, costs, scenarios, robust_scenarios,
                    beta, config=config, options=options)

    monkeypatch.setattr(sim_mod, "solve_mixed", flaky)
    rows = sweep_beta(topology, grid, costs, scen, robust,
                      betas=[0.0, 0.5, 1.0], lambda_max=6.0, dist="normal",
                      count=10, seed=2)
    assert len(rows) == 3
    assert rows[0].report is not None
    assert rows[1].report is None
    assert "RuntimeError" in rows[1].error
    assert rows[2].report is not None


def test_summary_and_samples_csv(tmp_path, c2):
    topology, grid, costs = c2
    base = compute_baseline(topology, grid, costs)
    sched, _ = solve_day_ahead(topology, grid, costs)
    rep = run_monte_carlo(topology, grid, costs, sched, base, lambda_max=6.0,
                          dist="uniform", count=6, seed=1)
    spath = tmp_path / "summary.csv"
    write_summary_csv(spath, [rep.row("det", None)], manifest_id="feed0001")
    lines = spath.read_text().splitlines()
    assert lines[0] == "# manifest: feed0001"
    assert lines[1] == "label,beta,K,U_max,U_mean,U_median,U_std,samples,dist,seed"
    assert len(lines) == 3
    ppath = tmp_path / "samples.csv"
    write_samples_csv(ppath, [("det", None, rep)], manifest_id="feed0001")
    lines = ppath.read_text().splitlines()
    assert lines[1] == "label,beta,sample,balancing_cost,total_cost"
    assert len(lines) == 2 + 6
