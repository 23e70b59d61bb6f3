"""Cascaded hydropower data model: modules, waterway routing, time grid, costs.

A "module" is a reservoir together with its plant and gates. Water moves
downstream through three waterways (turbine discharge, bypass gate, spill
gate), each optionally pointing at another module; a missing target means
the water leaves the system. All flows are in m3/s, volumes in Mm3, power
in MW and money in generic monetary units (mu).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# One m3/s sustained for one hour adds 3600 m3 = 0.0036 Mm3.
MM3_PER_M3S_HOUR = 0.0036

WATERWAYS = ("discharge", "bypass", "spill")


class SystemFormatError(ValueError):
    """Raised when a system file cannot be parsed against the schema."""


class SystemValidationError(ValueError):
    """Raised when a parsed system violates model invariants."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        lines = "\n".join(f"  - {v}" for v in violations)
        super().__init__(f"system validation failed:\n{lines}")


@dataclass(frozen=True)
class Violation:
    module: str
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.module}.{self.field}: {self.rule}"


def flow_to_volume(flow: float, duration: float) -> float:
    """Volume in Mm3 moved by `flow` m3/s sustained for `duration` hours."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    return flow * duration * MM3_PER_M3S_HOUR


@dataclass(frozen=True)
class DischargeSegment:
    """One piece of the piecewise linear turbine curve.

    Conversion efficiency must not increase with segment index, so filling
    segments in order is optimal and no ordering binaries are needed.
    """

    max_discharge: float  # m3/s
    energy_coeff: float   # MW per m3/s


@dataclass
class HydroModule:
    id: str
    water_value: float                 # mu per Mm3 of end storage
    segments: list[DischargeSegment]
    max_bypass: float                  # m3/s
    max_spill: float                   # m3/s
    max_volume: float                  # Mm3
    initial_volume: float              # Mm3
    max_production: float              # MW
    inflow: list[float]                # m3/s per period
    discharge_to: Optional[str] = None
    bypass_to: Optional[str] = None
    spill_to: Optional[str] = None

    @property
    def max_turbine_flow(self) -> float:
        return sum(s.max_discharge for s in self.segments)

    def waterway_target(self, waterway: str) -> Optional[str]:
        return {"discharge": self.discharge_to,
                "bypass": self.bypass_to,
                "spill": self.spill_to}[waterway]


@dataclass
class TimeGrid:
    period_hours: list[float]  # duration of each period, h
    net_load: list[float]      # forecast net load, MW
    reserve_req: list[float]   # symmetric spinning reserve requirement, MW

    @property
    def T(self) -> int:
        return len(self.period_hours)

    def with_reserve_req(self, req) -> "TimeGrid":
        """Copy of the grid with the reserve requirement replaced.

        `req` is either a scalar applied to every period or a length-T list.
        """
        if np.isscalar(req):
            req = [float(req)] * self.T
        req = [float(x) for x in req]
        if len(req) != self.T:
            raise ValueError(f"reserve requirement length {len(req)} != T={self.T}")
        return TimeGrid(list(self.period_hours), list(self.net_load), req)


@dataclass
class CostParams:
    load_shed: float        # mu/MW for unserved load in balancing
    power_spill: float      # mu/MW for surplus power in balancing
    bypass_penalty: float   # mu per (m3/s * h)
    spill_penalty: float    # mu per (m3/s * h)
    # Reserves are otherwise free in the day-ahead objective, which leaves the
    # allocation degenerate. A tiny linear cost selects the minimal allocation
    # among optima; reported first-stage costs always exclude it.
    reserve_epsilon: float = 1e-4


class Topology:
    """Validated collection of modules with derived upstream maps."""

    def __init__(self, modules: list[HydroModule]):
        self.modules = list(modules)
        self.index = {m.id: i for i, m in enumerate(self.modules)}
        if len(self.index) != len(self.modules):
            seen: set[str] = set()
            dup = next(m.id for m in self.modules if m.id in seen or seen.add(m.id))
            raise SystemFormatError(f"duplicate module id {dup!r}")
        # upstream[waterway][module_id] = ids feeding that module via that waterway
        self.upstream: dict[str, dict[str, list[str]]] = {
            w: {m.id: [] for m in self.modules} for w in WATERWAYS
        }
        for m in self.modules:
            for w in WATERWAYS:
                target = m.waterway_target(w)
                if target is not None and target in self.index:
                    self.upstream[w][target].append(m.id)

    def __iter__(self):
        return iter(self.modules)

    def __len__(self) -> int:
        return len(self.modules)

    def module(self, module_id: str) -> HydroModule:
        return self.modules[self.index[module_id]]

    def routing_edges(self) -> list[tuple[str, str, str]]:
        """All (source, target, waterway) edges of the routing graph."""
        edges = []
        for m in self.modules:
            for w in WATERWAYS:
                target = m.waterway_target(w)
                if target is not None:
                    edges.append((m.id, target, w))
        return edges

    def has_cycle(self) -> bool:
        children: dict[str, set[str]] = {m.id: set() for m in self.modules}
        for src, dst, _ in self.routing_edges():
            if dst in children:
                children[src].add(dst)
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(node: str) -> bool:
            state[node] = 0
            for nxt in children[node]:
                mark = state.get(nxt)
                if mark == 0:
                    return True
                if mark is None and visit(nxt):
                    return True
            state[node] = 1
            return False

        return any(visit(m.id) for m in self.modules if m.id not in state)


def validate_topology(topology: Topology, grid: TimeGrid,
                      costs: Optional[CostParams] = None) -> list[Violation]:
    """Collect every invariant violation in the system description.

    Violations are data, not failures: an empty list means the system is
    well formed.
    """
    out: list[Violation] = []
    T = grid.T

    if T == 0:
        out.append(Violation("<grid>", "period_hours", "at least one period required"))
    for name, values in (("period_hours", grid.period_hours),
                         ("net_load", grid.net_load),
                         ("reserve_req", grid.reserve_req)):
        if len(values) != T:
            out.append(Violation("<grid>", name, f"length {len(values)} != T={T}"))
    if any(f <= 0 for f in grid.period_hours):
        out.append(Violation("<grid>", "period_hours", "durations must be positive"))
    if any(r < 0 for r in grid.reserve_req):
        out.append(Violation("<grid>", "reserve_req", "requirement must be >= 0"))

    if costs is not None:
        for fname in ("load_shed", "power_spill", "bypass_penalty",
                      "spill_penalty", "reserve_epsilon"):
            if getattr(costs, fname) < 0:
                out.append(Violation("<costs>", fname, "must be >= 0"))

    for m in topology:
        if not m.segments:
            out.append(Violation(m.id, "segments", "at least one segment required"))
        for n, seg in enumerate(m.segments):
            if seg.max_discharge <= 0:
                out.append(Violation(m.id, f"segments[{n}].max_discharge", "must be > 0"))
            if seg.energy_coeff <= 0:
                out.append(Violation(m.id, f"segments[{n}].energy_coeff", "must be > 0"))
        for n in range(1, len(m.segments)):
            if m.segments[n].energy_coeff > m.segments[n - 1].energy_coeff + 1e-12:
                out.append(Violation(
                    m.id, f"segments[{n}].energy_coeff",
                    "efficiency must be non-increasing across segments"))
        if not 0 <= m.initial_volume <= m.max_volume:
            out.append(Violation(
                m.id, "initial_volume",
                f"{m.initial_volume} outside [0, {m.max_volume}]"))
        turbine_cap = sum(s.max_discharge * s.energy_coeff for s in m.segments)
        if m.max_production > turbine_cap + 1e-9:
            out.append(Violation(
                m.id, "max_production",
                f"{m.max_production} MW exceeds turbine curve capacity {turbine_cap} MW"))
        if m.max_production <= 0:
            out.append(Violation(m.id, "max_production", "must be > 0"))
        if m.max_bypass < 0 or m.max_spill < 0:
            out.append(Violation(m.id, "max_bypass/max_spill", "must be >= 0"))
        if len(m.inflow) != T:
            out.append(Violation(m.id, "inflow", f"length {len(m.inflow)} != T={T}"))
        if any(i < 0 for i in m.inflow):
            out.append(Violation(m.id, "inflow", "must be >= 0"))
        for w in WATERWAYS:
            target = m.waterway_target(w)
            if target is not None and target not in topology.index:
                out.append(Violation(m.id, f"{w}_to", f"unknown module {target!r}"))
            if target == m.id:
                out.append(Violation(m.id, f"{w}_to", "module cannot feed itself"))

    if topology.has_cycle():
        out.append(Violation("<topology>", "routing", "waterway routing graph has a cycle"))
    return out


# ---------------------------------------------------------------------------
# Serialization. The system file is plain JSON with top-level keys `modules`,
# `time_grid` and `costs` whose fields mirror the dataclasses one to one.
# ---------------------------------------------------------------------------

def _module_to_dict(m: HydroModule) -> dict:
    d = {
        "id": m.id,
        "water_value": m.water_value,
        "segments": [{"max_discharge": s.max_discharge, "energy_coeff": s.energy_coeff}
                     for s in m.segments],
        "max_bypass": m.max_bypass,
        "max_spill": m.max_spill,
        "max_volume": m.max_volume,
        "initial_volume": m.initial_volume,
        "max_production": m.max_production,
        "inflow": list(m.inflow),
    }
    for key, target in (("discharge_to", m.discharge_to),
                        ("bypass_to", m.bypass_to),
                        ("spill_to", m.spill_to)):
        if target is not None:
            d[key] = target
    return d


def system_to_dict(topology: Topology, grid: TimeGrid, costs: CostParams) -> dict:
    return {
        "modules": [_module_to_dict(m) for m in topology],
        "time_grid": {
            "period_hours": list(grid.period_hours),
            "net_load": list(grid.net_load),
            "reserve_req": list(grid.reserve_req),
        },
        "costs": {
            "load_shed": costs.load_shed,
            "power_spill": costs.power_spill,
            "bypass_penalty": costs.bypass_penalty,
            "spill_penalty": costs.spill_penalty,
            "reserve_epsilon": costs.reserve_epsilon,
        },
    }


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SystemFormatError(f"missing key {key!r} in {where}")
    return d[key]


def system_from_dict(data: dict) -> tuple[Topology, TimeGrid, CostParams]:
    if not isinstance(data, dict):
        raise SystemFormatError("system description must be a JSON object")
    raw_modules = _require(data, "modules", "system")
    raw_grid = _require(data, "time_grid", "system")
    raw_costs = _require(data, "costs", "system")

    modules = []
    for raw in raw_modules:
        where = f"module {raw.get('id', '?')!r}"
        segments = [DischargeSegment(float(_require(s, "max_discharge", where)),
                                     float(_require(s, "energy_coeff", where)))
                    for s in _require(raw, "segments", where)]
        modules.append(HydroModule(
            id=str(_require(raw, "id", where)),
            water_value=float(_require(raw, "water_value", where)),
            segments=segments,
            max_bypass=float(_require(raw, "max_bypass", where)),
            max_spill=float(_require(raw, "max_spill", where)),
            max_volume=float(_require(raw, "max_volume", where)),
            initial_volume=float(_require(raw, "initial_volume", where)),
            max_production=float(_require(raw, "max_production", where)),
            inflow=[float(x) for x in _require(raw, "inflow", where)],
            discharge_to=raw.get("discharge_to"),
            bypass_to=raw.get("bypass_to"),
            spill_to=raw.get("spill_to"),
        ))
    grid = TimeGrid(
        period_hours=[float(x) for x in _require(raw_grid, "period_hours", "time_grid")],
        net_load=[float(x) for x in _require(raw_grid, "net_load", "time_grid")],
        reserve_req=[float(x) for x in _require(raw_grid, "reserve_req", "time_grid")],
    )
    costs = CostParams(
        load_shed=float(_require(raw_costs, "load_shed", "costs")),
        power_spill=float(_require(raw_costs, "power_spill", "costs")),
        bypass_penalty=float(_require(raw_costs, "bypass_penalty", "costs")),
        spill_penalty=float(_require(raw_costs, "spill_penalty", "costs")),
        reserve_epsilon=float(raw_costs.get("reserve_epsilon", 1e-4)),
    )
    return Topology(modules), grid, costs


def load_system(path) -> tuple[Topology, TimeGrid, CostParams]:
    """Load and validate a system file; invalid systems are rejected."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(f"{path}: {exc}") from exc
    try:
        topology, grid, costs = system_from_dict(data)
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, SystemFormatError):
            raise
        raise SystemFormatError(f"{path}: {exc}") from exc
    violations = validate_topology(topology, grid, costs)
    if violations:
        raise SystemValidationError(violations)
    return topology, grid, costs


def save_system(path, topology: Topology, grid: TimeGrid, costs: CostParams) -> None:
    with open(path, "w") as f:
        json.dump(system_to_dict(topology, grid, costs), f, indent=2)
        f.write("\n")


def system_fingerprint(topology: Topology, grid: TimeGrid, costs: CostParams) -> str:
    """Stable hash pairing schedules with the system they were solved on.

    The reserve requirement is excluded: it is a model knob, and costs of
    schedules solved under different requirements must stay comparable
    against one baseline.
    """
    data = system_to_dict(topology, grid, costs)
    data["time_grid"]["reserve_req"] = None
    canon = json.dumps(data, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# First-stage schedule
# ---------------------------------------------------------------------------

@dataclass
class Schedule:
    """First-stage decisions: dispatch, reserves, flows and volumes.

    Arrays are indexed [module, period] in topology order; `discharge` is a
    per-module (segments, T) array and `volume` has T+1 columns, column 0
    holding the initial volume and column T the end volume.
    """

    module_ids: list[str]
    production: np.ndarray
    reserve: np.ndarray
    discharge: list[np.ndarray]
    bypass: np.ndarray
    spill: np.ndarray
    flow_in: np.ndarray
    flow_out: np.ndarray
    volume: np.ndarray
    first_stage_cost: float  # excludes the reserve_epsilon tie-break term
    system_fingerprint: str = ""

    @property
    def T(self) -> int:
        return self.production.shape[1]

    def total_discharge(self) -> np.ndarray:
        return np.stack([d.sum(axis=0) for d in self.discharge])


#: Tolerances for schedule validation: balances from the LP rows are exact to
#: solver precision, box constraints to LP feasibility tolerance.
BALANCE_TOL = 1e-9
BOX_TOL = 1e-6


def validate_schedule(schedule: Schedule, topology: Topology,
                      grid: TimeGrid) -> list[Violation]:
    """Check mass balance, power balance and the reserve box on a schedule."""
    out: list[Violation] = []
    T = grid.T
    if schedule.production.shape != (len(topology), T):
        out.append(Violation("<schedule>", "production",
                             f"shape {schedule.production.shape} != ({len(topology)}, {T})"))
        return out

    load_gap = np.abs(schedule.production.sum(axis=0) - np.asarray(grid.net_load))
    for t in np.nonzero(load_gap > BOX_TOL)[0]:
        out.append(Violation("<schedule>", f"production[:,{t}]",
                             f"power balance off by {load_gap[t]:.3e} MW"))

    F = np.asarray(grid.period_hours)
    for i, m in enumerate(topology):
        p, r = schedule.production[i], schedule.reserve[i]
        if (r < -BOX_TOL).any():
            out.append(Violation(m.id, "reserve", "negative reserve"))
        if (p + r > m.max_production + BOX_TOL).any():
            out.append(Violation(m.id, "reserve", "p + r exceeds max production"))
        if (p - r < -BOX_TOL).any():
            out.append(Violation(m.id, "reserve", "p - r below zero"))
        inflow = np.asarray(m.inflow)
        net = schedule.flow_in[i] - schedule.flow_out[i] + inflow
        residual = schedule.volume[i, 1:] - schedule.volume[i, :-1] \
            - MM3_PER_M3S_HOUR * F * net
        worst = np.abs(residual).max() if T else 0.0
        if worst > BALANCE_TOL:
            out.append(Violation(m.id, "volume",
                                 f"water balance residual {worst:.3e} Mm3"))
        if abs(schedule.volume[i, 0] - m.initial_volume) > BALANCE_TOL:
            out.append(Violation(m.id, "volume[0]", "initial volume mismatch"))
        if (schedule.volume[i] > m.max_volume + BOX_TOL).any():
            out.append(Violation(m.id, "volume", "volume above reservoir capacity"))
    return out


SCHEDULE_CSV_FIELDS = [
    "module", "period", "production_mw", "reserve_mw", "discharge_m3s",
    "bypass_m3s", "spill_m3s", "flow_in_m3s", "flow_out_m3s",
    "volume_start_mm3", "volume_end_mm3",
]


def write_schedule_csv(path, schedule: Schedule, max_segments: int = 0,
                       manifest_id: Optional[str] = None) -> None:
    """One row per (module, period); per-segment discharges get own columns."""
    max_segments = max(max_segments, max(d.shape[0] for d in schedule.discharge))
    fields = SCHEDULE_CSV_FIELDS + [f"discharge_seg{n}_m3s" for n in range(max_segments)]
    with open(path, "w", newline="") as f:
        if manifest_id:
            f.write(f"# manifest: {manifest_id}\n")
        writer = csv.writer(f)
        writer.writerow(fields)
        for i, mid in enumerate(schedule.module_ids):
            seg = schedule.discharge[i]
            for t in range(schedule.T):
                row = [mid, t,
                       repr(float(schedule.production[i, t])),
                       repr(float(schedule.reserve[i, t])),
                       repr(float(seg[:, t].sum())),
                       repr(float(schedule.bypass[i, t])),
                       repr(float(schedule.spill[i, t])),
                       repr(float(schedule.flow_in[i, t])),
                       repr(float(schedule.flow_out[i, t])),
                       repr(float(schedule.volume[i, t])),
                       repr(float(schedule.volume[i, t + 1]))]
                row += [repr(float(seg[n, t])) for n in range(seg.shape[0])]
                row += [""] * (max_segments - seg.shape[0])
                writer.writerow(row)


def write_reserve_csv(path, schedule: Schedule,
                      manifest_id: Optional[str] = None) -> None:
    """Reserve allocation per module and period, for stacked-area reporting."""
    with open(path, "w", newline="") as f:
        if manifest_id:
            f.write(f"# manifest: {manifest_id}\n")
        writer = csv.writer(f)
        writer.writerow(["module", "period", "reserve_mw"])
        for i, mid in enumerate(schedule.module_ids):
            for t in range(schedule.T):
                writer.writerow([mid, t, repr(float(schedule.reserve[i, t]))])
