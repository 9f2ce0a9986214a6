import numpy as np
import pytest

from rvopt.instances import paper_default_params
from rvopt.minlp_oracle import (Assignment, MinlpModel, OracleLimits,
                                bigM_labels, bigM_residuals, solve_exact)
from rvopt.model import (Arm, DecisionVector, ProblemInstance, StarGraph)
from rvopt.transcription import violation_report


def one_arm_instance(tasks=(), n_stamps=4, r0=(0.0, 0.0), rf=(0.0, 0.0),
                     length=1.0):
    graph = StarGraph([0.0, 0.0], [Arm.straight([0, 0], [1, 0], length)])
    return ProblemInstance(graph=graph,
                           uav_tasks=np.asarray(tasks, dtype=float).reshape(-1, 2),
                           r0=list(r0), rf=list(rf),
                           params=paper_default_params(), n_stamps=n_stamps)


class TestAssignment:
    def test_matrix_round_trip(self):
        a = Assignment(task_stamp=(2, 0), arm_stamp=(3,), discharge=(True, False, True))
        u, v, w = a.matrices(4)
        assert u.sum() == 2 and v.sum() == 1
        b = Assignment.from_matrices(u, v, w)
        assert b == a

    def test_rejects_bad_sums(self):
        u = np.zeros((4, 1), dtype=int)   # task never assigned
        v = np.zeros((4, 0), dtype=int)
        with pytest.raises(ValueError, match="exactly one"):
            Assignment.from_matrices(u, v, np.zeros(3, dtype=int))
        u2 = np.zeros((4, 1), dtype=int)
        u2[0, 0] = u2[1, 0] = 1          # assigned twice
        with pytest.raises(ValueError, match="exactly one"):
            Assignment.from_matrices(u2, v, np.zeros(3, dtype=int))


class TestBigM:
    def test_mu_dominates_instance_scale(self):
        inst = one_arm_instance(tasks=[[0.5, 0.5]])
        model = MinlpModel.build(inst)
        assert model.mu > 1.0
        with pytest.raises(ValueError, match="dominate"):
            MinlpModel.build(inst, mu=0.1)

    def test_discharge_gate_binds_when_w_is_one(self):
        # W_k = 1 turns |e_{k+1} - e_k + s_k| <= mu(1 - W_k) into an equality
        # pair; the charging gates go slack by mu
        inst = one_arm_instance(n_stamps=2)
        model = MinlpModel.build(inst)
        dv = DecisionVector(inst.layout)
        dv.e[:] = [0.4, 0.3]
        dv.s[0] = 0.1
        assign = Assignment((), (0,), (True,))
        bundle = bigM_residuals(dv.x, assign, model)
        labels = bundle.ineq_labels
        i_plus = labels.index("discharge_gate[k=1,+]")
        i_minus = labels.index("discharge_gate[k=1,-]")
        # exact discharge: both sides of the equality pair are tight
        assert bundle.ineq[i_plus] == pytest.approx(0.0, abs=1e-12)
        assert bundle.ineq[i_minus] == pytest.approx(0.0, abs=1e-12)
        i_chg = labels.index("charge_rate_gate[k=1]")
        assert bundle.ineq[i_chg] <= -model.mu + 1.0   # slack by mu

    def test_task_gate_tight_at_task(self):
        inst = one_arm_instance(tasks=[[0.3, 0.2]], n_stamps=3)
        model = MinlpModel.build(inst)
        dv = DecisionVector(inst.layout)
        dv.e[:] = 0.4
        dv.r_a[1] = [0.3, 0.2]
        assign = Assignment((1,), (0,), (True, True))
        bundle = bigM_residuals(dv.x, assign, model)
        labels = bundle.ineq_labels
        for comp in ("+x", "-x", "+y", "-y"):
            idx = labels.index(f"task_gate[i=0,k=2,{comp}]")
            assert bundle.ineq[idx] == pytest.approx(0.0, abs=1e-12)

    def test_ungated_residuals_bounded_by_mu(self):
        inst = one_arm_instance(tasks=[[0.5, 0.5]], n_stamps=3)
        model = MinlpModel.build(inst)
        rng = np.random.default_rng(0)
        assign = Assignment((1,), (2,), (True, False))
        for _ in range(20):
            x = rng.uniform(-1, 1, inst.layout.size)
            bundle = bigM_residuals(x, assign, model)
            assert np.all(bundle.ineq <= model.mu + 1e-9)

    def test_labels_cover_residuals(self):
        inst = one_arm_instance(tasks=[[0.5, 0.5]], n_stamps=3)
        model = MinlpModel.build(inst)
        assign = Assignment((1,), (2,), (True, True))
        bundle = bigM_residuals(np.zeros(inst.layout.size), assign, model)
        assert len(bundle.labels) == bundle.ineq.size
        assert bundle.labels == bigM_labels(inst)


class TestGatingSoundness:
    def test_feasible_gated_point_has_no_exact_violation(self):
        # park at the arm end with W=discharge and s=0: all gates hold and
        # the disjunctions mapped back are exactly satisfied
        inst = one_arm_instance(n_stamps=2, r0=(1.0, 0.0), rf=(1.0, 0.0))
        model = MinlpModel.build(inst)
        dv = DecisionVector(inst.layout)
        dv.e[:] = inst.params.e_max
        dv.r_a[:] = [1.0, 0.0]
        dv.p[:, 0] = 1.0
        assign = Assignment((), (0,), (True,))
        bundle = bigM_residuals(dv.x, assign, model)
        assert np.all(bundle.ineq <= 1e-9)
        total = violation_report(dv.x, inst).total
        assert total <= bundle.ineq.size * 1e-9


class TestSolveExact:
    def test_round_trip_geometry(self):
        # the ground vehicle must touch the arm end and return
        inst = one_arm_instance(n_stamps=4)
        res = solve_exact(inst)
        assert res.feasible
        assert res.objective == pytest.approx(2.0 / 16.2, rel=1e-4)

    def test_small_detour_rides_inside_the_tour(self):
        inst = one_arm_instance(tasks=[[0.1, 0.0]], n_stamps=4)
        res = solve_exact(inst)
        assert res.feasible
        assert res.objective == pytest.approx(2.0 / 16.2, rel=1e-3)

    def test_degenerate_two_stamps(self):
        inst = one_arm_instance(n_stamps=2, r0=(1.0, 0.0), rf=(1.0, 0.0))
        res = solve_exact(inst)
        assert res.feasible
        assert res.objective == pytest.approx(0.0, abs=1e-9)

    def test_solution_is_exactly_feasible(self):
        inst = one_arm_instance(tasks=[[0.2, 0.3]], n_stamps=4)
        res = solve_exact(inst)
        assert res.feasible
        assert violation_report(res.x, inst).total <= 1e-6

    def test_limits_enforced(self):
        inst = one_arm_instance(n_stamps=4)
        with pytest.raises(ValueError, match="exceeds"):
            solve_exact(inst, OracleLimits(max_n=3))
        big = one_arm_instance(tasks=[[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]],
                               n_stamps=6)
        with pytest.raises(ValueError, match="exceeds"):
            solve_exact(big)

    def test_infeasible_task_reported(self):
        # task farther than the battery allows from anywhere on the network
        inst = one_arm_instance(tasks=[[30.0, 30.0]], n_stamps=4)
        res = solve_exact(inst)
        assert not res.feasible
        assert res.x is None

    def test_oracle_never_beats_chain_bound(self):
        inst = one_arm_instance(tasks=[[0.4, 0.4]], n_stamps=4)
        res = solve_exact(inst)
        assert res.feasible
        # ground tour alone needs 2 km / v_G
        assert res.objective >= 2.0 / 16.2 - 1e-9
