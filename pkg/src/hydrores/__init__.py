"""Day-ahead scheduling and reserve procurement for cascaded hydropower.

The package covers the full study loop: describe a cascade, commit a
schedule under one of five uncertainty treatments (deterministic,
stochastic, robust, unified, mixed), then price the commitment against
simulated net-load deviations.
"""

__version__ = "0.1.0"

from .system import (CostParams, DischargeSegment, HydroModule, Schedule,
                     TimeGrid, Topology, load_system, save_system,
                     system_fingerprint, validate_schedule, validate_topology)
from .lp import LinearProgram, SolveOptions, SolveResult, SolveStatus, solve
from .dayahead import (DayAheadConfig, build_day_ahead, day_ahead_cost,
                       extract_schedule, solve_day_ahead)
from .balancing import (BalancingOutcome, WorstCase, build_balancing_primal,
                        build_perfect_foresight, build_worst_case_milp,
                        solve_balancing, solve_worst_case)
from .uncertainty import (NetLoadScenario, UncertaintySet, contains,
                          enumerate_deviations, load_scenarios, sample,
                          save_scenarios)
from .ccg import CcgTrace, RobustSolution, solve_robust
from .composite import (ModelSpec, ScenarioModelSolution, solve_mixed,
                        solve_stochastic, solve_unified)
from .simulator import (Baseline, CostReport, balancing_cost, compute_baseline,
                        procurement_cost, run_monte_carlo, sweep_beta)
from .presets import get_preset
