"""Backend-neutral LP/MILP container plus a verified solve entry point.

Models are built by name: variables and constraints are appended in
deterministic insertion order, so building the same model twice yields
byte-identical solver inputs (important when optima are degenerate).

The solver backend is scipy's HiGHS interface. Every optimal result is
re-checked independently of the backend: primal residuals for all rows and
bounds, and for pure LPs the strong-duality gap. Dual values follow the
sensitivity convention d(objective)/d(rhs), so under minimize the dual of a
binding <= row is <= 0 and the dual of a >= row is >= 0.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

CONTINUOUS = "continuous"
BINARY = "binary"

LESS_EQUAL = "<="
EQUAL = "=="
GREATER_EQUAL = ">="
_SENSES = (LESS_EQUAL, EQUAL, GREATER_EQUAL)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


class ModelError(ValueError):
    """The model is internally inconsistent and was rejected before dispatch."""


class SolverBackendError(RuntimeError):
    """The backend failed or returned a result that fails verification."""


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


@dataclass
class SolveOptions:
    feasibility_tol: float = 1e-6   # verified max row residual
    bound_tol: float = 1e-7        # verified max bound violation (backend primal tol)
    duality_tol: float = 1e-6     # |c'x - dual obj| <= tol*(1+|c'x|)
    mip_gap: float = 0.0           # absolute MIP gap
    int_tol: float = 1e-9         # integrality tolerance handed to the backend
    time_limit: Optional[float] = None
    verify: bool = True


@dataclass
class _Variable:
    name: str
    lb: float
    ub: float
    kind: str  # CONTINUOUS or BINARY


@dataclass
class _Constraint:
    name: str
    indices: np.ndarray
    coeffs: np.ndarray
    sense: str
    rhs: float


@dataclass
class SolveResult:
    status: SolveStatus
    objective: Optional[float]
    x: Optional[np.ndarray]
    var_names: list[str]
    row_names: list[str]
    dual: Optional[np.ndarray]          # sensitivity duals, by row order
    reduced_cost_lb: Optional[np.ndarray]
    reduced_cost_ub: Optional[np.ndarray]
    wall_time: float
    message: str = ""

    @property
    def primal(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return dict(zip(self.var_names, self.x.tolist()))

    @property
    def duals(self) -> dict[str, float]:
        if self.dual is None:
            return {}
        return dict(zip(self.row_names, self.dual.tolist()))

    def value(self, name: str) -> float:
        return self.x[self._var_index[name]]

    def dual_value(self, name: str) -> float:
        if self.dual is None:
            raise ValueError("duals unavailable (MILP or non-optimal solve)")
        return self.dual[self._row_index[name]]

    def __post_init__(self):
        self._var_index = {n: i for i, n in enumerate(self.var_names)}
        self._row_index = {n: i for i, n in enumerate(self.row_names)}


class LinearProgram:
    """Ordered LP/MILP container; rows and columns addressed by unique name."""

    def __init__(self, name: str = "", sense: str = MINIMIZE):
        if sense not in (MINIMIZE, MAXIMIZE):
            raise ModelError(f"unknown objective sense {sense!r}")
        self.name = name
        self.sense = sense
        self.objective_constant = 0.0
        self._vars: list[_Variable] = []
        self._var_index: dict[str, int] = {}
        self._obj: dict[int, float] = {}
        self._rows: list[_Constraint] = []
        self._row_index: dict[str, int] = {}
        self._compiled: Optional[_Compiled] = None

    # -- construction -------------------------------------------------------

    def add_variable(self, name: str, lb: float = 0.0, ub: float = np.inf,
                     obj: float = 0.0, kind: str = CONTINUOUS) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name!r}: lower bound {lb} > upper bound {ub}")
        idx = len(self._vars)
        self._vars.append(_Variable(name, float(lb), float(ub), kind))
        self._var_index[name] = idx
        if obj:
            self._obj[idx] = float(obj)
        self._compiled = None
        return idx

    def add_constraint(self, name: str, coeffs: Sequence[tuple[int, float]],
                       sense: str, rhs: float) -> int:
        if name in self._row_index:
            raise ModelError(f"duplicate constraint {name!r}")
        if sense not in _SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        idx_arr = np.fromiter((i for i, _ in coeffs), dtype=np.int64,
                              count=len(coeffs))
        if len(idx_arr) and (idx_arr.min() < 0 or idx_arr.max() >= len(self._vars)):
            raise ModelError(f"constraint {name!r} references undeclared variable")
        coef_arr = np.fromiter((c for _, c in coeffs), dtype=np.float64,
                               count=len(coeffs))
        row = len(self._rows)
        self._rows.append(_Constraint(name, idx_arr, coef_arr, sense, float(rhs)))
        self._row_index[name] = row
        self._compiled = None
        return row

    def add_term(self, constraint: str, var: int, coeff: float) -> None:
        """Append one coefficient to an existing row (column generation)."""
        if not 0 <= var < len(self._vars):
            raise ModelError(f"constraint {constraint!r}: undeclared variable {var}")
        r = self._rows[self._row_index[constraint]]
        r.indices = np.append(r.indices, np.int64(var))
        r.coeffs = np.append(r.coeffs, float(coeff))
        self._compiled = None

    def set_objective_coeff(self, var: int, coeff: float) -> None:
        if coeff:
            self._obj[var] = float(coeff)
        else:
            self._obj.pop(var, None)
        if self._compiled is not None:
            self._compiled.c[var] = coeff if self.sense == MINIMIZE else -coeff

    def set_rhs(self, name: str, rhs: float) -> None:
        """Cheap rhs update; the compiled matrices are reused."""
        row = self._row_index[name]
        self._rows[row].rhs = float(rhs)
        if self._compiled is not None:
            self._compiled.set_rhs(row, float(rhs))

    def set_bounds(self, name: str, lb: float, ub: float) -> None:
        """Cheap variable-bound update; the compiled matrices are reused."""
        if lb > ub:
            raise ModelError(f"variable {name!r}: lower bound {lb} > upper bound {ub}")
        idx = self._var_index[name]
        v = self._vars[idx]
        v.lb, v.ub = float(lb), float(ub)
        if self._compiled is not None:
            self._compiled.lb[idx] = lb
            self._compiled.ub[idx] = ub

    # -- introspection ------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self._vars)

    @property
    def num_constraints(self) -> int:
        return len(self._rows)

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self._vars]

    @property
    def constraint_names(self) -> list[str]:
        return [r.name for r in self._rows]

    def variable_index(self, name: str) -> int:
        return self._var_index[name]

    def has_integers(self) -> bool:
        return any(v.kind == BINARY for v in self._vars)

    def to_lp_text(self) -> str:
        """Human-readable LP-format dump for debugging (not a stable format)."""
        sign = {MINIMIZE: "Minimize", MAXIMIZE: "Maximize"}[self.sense]
        parts = [f"\\ {self.name}", sign, " obj:"]
        terms = [f" {c:+g} {self._vars[i].name}" for i, c in sorted(self._obj.items())]
        parts.append("".join(terms) if terms else " 0")
        parts.append("Subject To")
        op = {LESS_EQUAL: "<=", EQUAL: "=", GREATER_EQUAL: ">="}
        for r in self._rows:
            terms = "".join(f" {c:+g} {self._vars[i].name}"
                            for i, c in zip(r.indices, r.coeffs))
            parts.append(f" {r.name}:{terms or ' 0'} {op[r.sense]} {r.rhs:g}")
        parts.append("Bounds")
        for v in self._vars:
            parts.append(f" {v.lb:g} <= {v.name} <= {v.ub:g}")
        binaries = [v.name for v in self._vars if v.kind == BINARY]
        if binaries:
            parts.append("Binary")
            parts.extend(f" {n}" for n in binaries)
        parts.append("End")
        return "\n".join(parts) + "\n"

    # -- compilation --------------------------------------------------------

    def _compile(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled


class _Compiled:
    """Sparse matrices in backend form, reusable across rhs/bound updates.

    Equality rows and inequality rows keep their own matrices; >= rows are
    stored flipped to <= so linprog can consume them directly. `eq_pos` and
    `ub_pos` map original row index to position within each block, and
    `ub_sign` remembers the flip so duals can be mapped back.
    """

    def __init__(self, lp: LinearProgram):
        n = lp.num_variables
        c = np.zeros(n)
        for i, coeff in lp._obj.items():
            c[i] = coeff
        self.max_flip = lp.sense == MAXIMIZE
        self.c = -c if self.max_flip else c
        self.constant = lp.objective_constant
        self.lb = np.array([v.lb for v in lp._vars])
        self.ub = np.array([v.ub for v in lp._vars])
        self.integrality = np.array(
            [1 if v.kind == BINARY else 0 for v in lp._vars], dtype=np.int8)

        eq_rows, eq_vals, eq_cols, self.b_eq = [], [], [], []
        ub_rows, ub_vals, ub_cols, self.b_ub = [], [], [], []
        self.eq_pos = np.full(lp.num_constraints, -1, dtype=np.int64)
        self.ub_pos = np.full(lp.num_constraints, -1, dtype=np.int64)
        self.ub_sign = np.ones(lp.num_constraints)
        for r_idx, r in enumerate(lp._rows):
            if r.sense == EQUAL:
                self.eq_pos[r_idx] = len(self.b_eq)
                eq_rows.extend([len(self.b_eq)] * len(r.indices))
                eq_cols.extend(r.indices.tolist())
                eq_vals.extend(r.coeffs.tolist())
                self.b_eq.append(r.rhs)
            else:
                sign = 1.0 if r.sense == LESS_EQUAL else -1.0
                self.ub_sign[r_idx] = sign
                self.ub_pos[r_idx] = len(self.b_ub)
                ub_rows.extend([len(self.b_ub)] * len(r.indices))
                ub_cols.extend(r.indices.tolist())
                ub_vals.extend((sign * r.coeffs).tolist())
                self.b_ub.append(sign * r.rhs)
        self.b_eq = np.array(self.b_eq)
        self.b_ub = np.array(self.b_ub)
        self.A_eq = sparse.csr_matrix(
            (eq_vals, (eq_rows, eq_cols)), shape=(len(self.b_eq), n))
        self.A_ub = sparse.csr_matrix(
            (ub_vals, (ub_rows, ub_cols)), shape=(len(self.b_ub), n))

    def set_rhs(self, row: int, rhs: float) -> None:
        if self.eq_pos[row] >= 0:
            self.b_eq[self.eq_pos[row]] = rhs
        else:
            self.b_ub[self.ub_pos[row]] = self.ub_sign[row] * rhs


def _map_status(code: int, message: str) -> SolveStatus:
    if code == 0:
        return SolveStatus.OPTIMAL
    if code == 1:
        return SolveStatus.LIMIT
    if code == 2:
        return SolveStatus.INFEASIBLE
    if code == 3:
        return SolveStatus.UNBOUNDED
    raise SolverBackendError(f"backend failure: {message}")


def _verify_primal(lp: LinearProgram, comp: _Compiled, x: np.ndarray,
                   options: SolveOptions) -> None:
    lo_viol = np.max(comp.lb - x, initial=0.0)
    hi_viol = np.max(x - comp.ub, initial=0.0)
    if max(lo_viol, hi_viol) > options.bound_tol:
        raise SolverBackendError(
            f"{lp.name}: bound violation {max(lo_viol, hi_viol):.3e} "
            f"exceeds {options.bound_tol:.1e}")
    if comp.b_eq.size:
        eq_res = np.abs(comp.A_eq @ x - comp.b_eq)
        if eq_res.max() > options.feasibility_tol:
            worst = int(np.argmax(eq_res))
            raise SolverBackendError(
                f"{lp.name}: equality residual {eq_res.max():.3e} "
                f"(row {worst}) exceeds {options.feasibility_tol:.1e}")
    if comp.b_ub.size:
        ub_res = comp.A_ub @ x - comp.b_ub
        if ub_res.max(initial=0.0) > options.feasibility_tol:
            worst = int(np.argmax(ub_res))
            raise SolverBackendError(
                f"{lp.name}: inequality residual {ub_res.max():.3e} "
                f"(row {worst}) exceeds {options.feasibility_tol:.1e}")
    if comp.integrality.any():
        mask = comp.integrality.astype(bool)
        frac = np.abs(x[mask] - np.round(x[mask]))
        if frac.size and frac.max() > 1e-6:
            raise SolverBackendError(
                f"{lp.name}: integrality violation {frac.max():.3e}")


def _verify_duality(lp: LinearProgram, comp: _Compiled, res,
                    objective: float, options: SolveOptions) -> None:
    """Independent strong-duality check on the backend's dual vector."""
    dual_obj = 0.0
    if comp.b_eq.size:
        dual_obj += comp.b_eq @ res.eqlin.marginals
    if comp.b_ub.size:
        dual_obj += comp.b_ub @ res.ineqlin.marginals
    lo_m, up_m = res.lower.marginals, res.upper.marginals
    finite_lo = np.isfinite(comp.lb)
    finite_up = np.isfinite(comp.ub)
    dual_obj += comp.lb[finite_lo] @ lo_m[finite_lo]
    dual_obj += comp.ub[finite_up] @ up_m[finite_up]
    primal_obj = objective if not comp.max_flip else -objective
    gap = abs(primal_obj - dual_obj)
    if gap > options.duality_tol * (1.0 + abs(primal_obj)):
        raise SolverBackendError(
            f"{lp.name}: strong duality gap {gap:.3e} exceeds "
            f"{options.duality_tol:.1e}*(1+|obj|)")


def solve(lp: LinearProgram, options: Optional[SolveOptions] = None) -> SolveResult:
    """Solve the model and independently verify any optimal result.

    MILPs run with absolute gap `mip_gap` and integer tolerance `int_tol`;
    their results carry no duals. LP duals are rhs sensitivities of the
    stated objective.
    """
    options = options or SolveOptions()
    comp = lp._compile()
    t0 = time.perf_counter()
    if lp.has_integers():
        res = _solve_milp(comp, options)
    else:
        res = _solve_lp(comp, options)
    wall = time.perf_counter() - t0

    status = _map_status(res.status, getattr(res, "message", ""))
    if status is not SolveStatus.OPTIMAL:
        return SolveResult(status=status, objective=None, x=None,
                           var_names=lp.variable_names,
                           row_names=lp.constraint_names,
                           dual=None, reduced_cost_lb=None, reduced_cost_ub=None,
                           wall_time=wall, message=getattr(res, "message", ""))

    x = np.asarray(res.x, dtype=float)
    raw_obj = float(res.fun)
    objective = (-raw_obj if comp.max_flip else raw_obj) + comp.constant
    if options.verify:
        _verify_primal(lp, comp, x, options)

    dual = rc_lb = rc_ub = None
    if not lp.has_integers():
        if options.verify:
            _verify_duality(lp, comp, res, objective - comp.constant, options)
        # Map marginals back to original rows and the stated objective sense.
        dual = np.empty(lp.num_constraints)
        eq_m = res.eqlin.marginals
        ub_m = res.ineqlin.marginals
        for r_idx in range(lp.num_constraints):
            if comp.eq_pos[r_idx] >= 0:
                dual[r_idx] = eq_m[comp.eq_pos[r_idx]]
            else:
                dual[r_idx] = comp.ub_sign[r_idx] * ub_m[comp.ub_pos[r_idx]]
        rc_lb = np.asarray(res.lower.marginals, dtype=float)
        rc_ub = np.asarray(res.upper.marginals, dtype=float)
        if comp.max_flip:
            dual = -dual
            rc_lb, rc_ub = -rc_lb, -rc_ub

    return SolveResult(status=SolveStatus.OPTIMAL, objective=objective, x=x,
                       var_names=lp.variable_names, row_names=lp.constraint_names,
                       dual=dual, reduced_cost_lb=rc_lb, reduced_cost_ub=rc_ub,
                       wall_time=wall, message=getattr(res, "message", ""))


def _solve_lp(comp: _Compiled, options: SolveOptions):
    solver_opts = {"presolve": True}
    if options.time_limit is not None:
        solver_opts["time_limit"] = options.time_limit
    return linprog(
        comp.c,
        A_ub=comp.A_ub if comp.b_ub.size else None,
        b_ub=comp.b_ub if comp.b_ub.size else None,
        A_eq=comp.A_eq if comp.b_eq.size else None,
        b_eq=comp.b_eq if comp.b_eq.size else None,
        bounds=np.column_stack([comp.lb, comp.ub]),
        method="highs",
        options=solver_opts,
    )


def _solve_milp(comp: _Compiled, options: SolveOptions):
    constraints = []
    if comp.b_eq.size:
        constraints.append(LinearConstraint(comp.A_eq, comp.b_eq, comp.b_eq))
    if comp.b_ub.size:
        constraints.append(LinearConstraint(comp.A_ub, -np.inf, comp.b_ub))
    milp_opts = {
        "mip_rel_gap": 0.0,
        # Absolute gap and integer tolerance are HiGHS options that scipy
        # forwards verbatim (with a warning it does not recognize them).
        "mip_abs_gap": options.mip_gap,
        "mip_feasibility_tolerance": options.int_tol,
    }
    if options.time_limit is not None:
        milp_opts["time_limit"] = options.time_limit
    with warnings.catch_warnings():
        warnings.filterwarnings(
            "ignore", message="Unrecognized options detected",
            category=RuntimeWarning)
        return milp(comp.c, constraints=constraints,
                    integrality=comp.integrality,
                    bounds=Bounds(comp.lb, comp.ub),
                    options=milp_opts)
