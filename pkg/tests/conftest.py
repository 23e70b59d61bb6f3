"""Shared fixtures.

C1 is a single module with one segment, sized so every quantity can be
checked by hand. C2 is a two-module cascade with two segments per module
and an uncertainty set small enough to enumerate (33 vertices), used for
the oracle comparisons.
"""

import numpy as np
import pytest

from hydrores.system import (CostParams, DischargeSegment, HydroModule,
                             TimeGrid, Topology)
from hydrores.uncertainty import UncertaintySet


def make_c1():
    # One segment: q <= 10 m3/s at 2 MW per m3/s. Load 10 MW needs q = 5,
    # which drains 0.018 Mm3; end volume 0.482 valued at 1000 mu/Mm3
    # gives the -482.0 objective.
    module = HydroModule(
        id="A", water_value=1000.0,
        segments=[DischargeSegment(10.0, 2.0)],
        max_bypass=20.0, max_spill=50.0,
        max_volume=1.0, initial_volume=0.5,
        max_production=20.0, inflow=[0.0])
    topology = Topology([module])
    grid = TimeGrid(period_hours=[1.0], net_load=[10.0], reserve_req=[0.0])
    costs = CostParams(load_shed=3000.0, power_spill=1000.0,
                       bypass_penalty=5.0, spill_penalty=10.0)
    return topology, grid, costs


def make_c2():
    a = HydroModule(
        id="A", water_value=2000.0,
        segments=[DischargeSegment(6.0, 1.2), DischargeSegment(6.0, 0.9)],
        max_bypass=5.0, max_spill=50.0,
        max_volume=0.5, initial_volume=0.3,
        max_production=12.0, inflow=[2.0] * 4,
        discharge_to="B", bypass_to="B", spill_to="B")
    b = HydroModule(
        id="B", water_value=3000.0,
        segments=[DischargeSegment(12.0, 1.5), DischargeSegment(8.0, 1.1)],
        max_bypass=10.0, max_spill=60.0,
        max_volume=0.4, initial_volume=0.2,
        max_production=25.0, inflow=[1.0] * 4)
    topology = Topology([a, b])
    grid = TimeGrid(period_hours=[1.0] * 4,
                    net_load=[20.0, 30.0, 25.0, 15.0],
                    reserve_req=[0.0] * 4)
    costs = CostParams(load_shed=3000.0, power_spill=1000.0,
                       bypass_penalty=5.0, spill_penalty=10.0)
    return topology, grid, costs


@pytest.fixture(scope="session")
def c1():
    return make_c1()


@pytest.fixture(scope="session")
def c2():
    return make_c2()


@pytest.fixture(scope="session")
def c2_uset():
    # Lambda stresses module capacity: a +6 MW deviation at the 30 MW peak
    # cannot always be redispatched without touching the second segments.
    return UncertaintySet(lambda_max=6.0, gamma=2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240816)
