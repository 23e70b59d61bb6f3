"""Built-in study systems.

`synthetic12` is a two-string cascade sized like a mid-size Nordic
watercourse: 537.4 MW across 12 modules, a day horizon in twelve two-hour
blocks, evening peak at 420 MW, reservoirs starting at 65% of capacity.
Water values span cheap downstream run-of-river storage to expensive
headwater storage so reserve placement carries a real opportunity cost. It
exists because published reservoir datasets at this granularity are
proprietary; none of its numbers are measurements.
"""

from __future__ import annotations

from .system import (CostParams, DischargeSegment, HydroModule, TimeGrid,
                     Topology)

PRESET_NAMES = ("synthetic12",)

#: module id -> (max MW, turbine m3/s, water value mu/Mm3, reservoir Mm3,
#:               local inflow m3/s, discharge target)
_SYNTH12 = {
    "M1": (30.0, 15.0, 8200.0, 40.0, 6.0, "M2"),
    "M2": (22.0, 14.0, 7300.0, 1.5, 1.0, "M3"),
    "M3": (18.0, 14.0, 6500.0, 1.2, 1.0, "M4"),
    "M4": (150.0, 100.0, 4800.0, 220.0, 12.0, "M7"),
    "M5": (35.0, 20.0, 7800.0, 30.0, 5.0, "M6"),
    "M6": (28.0, 22.0, 6800.0, 2.5, 1.0, "M4"),
    "M7": (90.0, 160.0, 1900.0, 6.0, 4.0, None),
    "M8": (20.0, 12.0, 7600.0, 1.0, 1.0, "M9"),
    "M9": (26.0, 16.0, 6400.0, 2.0, 1.0, "M10"),
    "M10": (64.0, 70.0, 3900.0, 80.0, 8.0, "M7"),
    "M11": (24.0, 13.0, 5600.0, 18.0, 3.0, "M10"),
    "M12": (30.4, 16.0, 8600.0, 55.0, 5.0, "M8"),
}

#: net load per two-hour block, MW; evening peak 420
_SYNTH12_LOAD = [
    244.0, 229.0, 242.0, 310.0, 363.0, 356.0,
    344.0, 357.0, 402.0, 420.0, 379.0, 291.0,
]

_INITIAL_FILL = 0.65
_BLOCK_HOURS = 2.0


def _synthetic12() -> tuple[Topology, TimeGrid, CostParams]:
    T = len(_SYNTH12_LOAD)
    modules = []
    for mid, (p_max, q_total, wv, v_max, inflow, target) in _SYNTH12.items():
        # Two-segment curve: best 60% of the flow at full efficiency, the
        # remainder at 80%. Coefficients back out of 0.92 * q_total * e1 = P.
        e1 = p_max / (0.92 * q_total)
        segments = [DischargeSegment(0.6 * q_total, e1),
                    DischargeSegment(0.4 * q_total, 0.8 * e1)]
        modules.append(HydroModule(
            id=mid,
            water_value=wv,
            segments=segments,
            max_bypass=0.5 * q_total,
            max_spill=400.0,
            max_volume=v_max,
            initial_volume=_INITIAL_FILL * v_max,
            max_production=p_max,
            inflow=[inflow] * T,
            discharge_to=target,
            bypass_to=target,
            spill_to=target,
        ))
    grid = TimeGrid(period_hours=[_BLOCK_HOURS] * T,
                    net_load=list(_SYNTH12_LOAD),
                    reserve_req=[0.0] * T)
    costs = CostParams(load_shed=3000.0, power_spill=1000.0,
                       bypass_penalty=5.0, spill_penalty=10.0)
    return Topology(modules), grid, costs


def get_preset(name: str) -> tuple[Topology, TimeGrid, CostParams]:
    if name == "synthetic12":
        return _synthetic12()
    raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
