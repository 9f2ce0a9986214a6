import numpy as np
import pytest

from rvopt.model import (Arm, DecisionVector, PhysicalParams, ProblemInstance,
                         StarGraph)


@pytest.fixture
def hover_instance():
    """Two stamps, no tasks, both endpoints at the junction: the all-zero
    mission with objective 0 and no violated constraint."""
    graph = StarGraph([0.0, 0.0], [Arm.straight([0, 0], [1, 0], 5.0),
                                   Arm.straight([0, 0], [0, 1], 3.0),
                                   Arm.straight([0, 0], [-1, 0], 2.0)])
    params = PhysicalParams(v_max_a=36.0, v_max_g=16.2, kappa=1.5,
                            e_min=0.0, e_max=0.4, s_min=0.0, s_max=10.0)
    return ProblemInstance(graph=graph, uav_tasks=np.zeros((0, 2)),
                           r0=[0.0, 0.0], rf=[0.0, 0.0], params=params,
                           n_stamps=2)


@pytest.fixture
def hover_point(hover_instance):
    inst = hover_instance
    dv = DecisionVector(inst.layout)
    dv.e[:] = inst.params.e_max
    return dv


@pytest.fixture
def parked_instance():
    """Two stamps, one arm, both endpoints at the arm end: a fully feasible
    zero-time mission (the arm endpoint is already visited at both stamps)."""
    graph = StarGraph([0.0, 0.0], [Arm.straight([0, 0], [1, 0], 5.0)])
    params = PhysicalParams(v_max_a=36.0, v_max_g=16.2, kappa=1.5,
                            e_min=0.0, e_max=0.4, s_min=0.0, s_max=10.0)
    return ProblemInstance(graph=graph, uav_tasks=np.zeros((0, 2)),
                           r0=[5.0, 0.0], rf=[5.0, 0.0], params=params,
                           n_stamps=2)


@pytest.fixture
def parked_point(parked_instance):
    inst = parked_instance
    dv = DecisionVector(inst.layout)
    dv.e[:] = inst.params.e_max
    dv.r_a[:] = [5.0, 0.0]
    dv.p[:, 0] = 5.0
    return dv
