import numpy as np
import pytest

from rvopt.model import (Arm, DecisionVector, PhysicalParams, ProblemInstance,
                         StarGraph, VariableLayout, default_stamp_count,
                         graph_position, graph_position_jacobian,
                         instance_from_dict, instance_to_dict, load_instance,
                         project_to_network, save_instance)


def three_arm_graph():
    return StarGraph([0.0, 0.0], [
        Arm.straight([0, 0], [1, 0], 5.0),
        Arm.straight([0, 0], [0, 1], 3.0),
        Arm.straight([0, 0], [-1, 0], 2.0),
    ])


def quarter_circle_arm():
    # radius-2 quarter circle: curve(t) = (2 sin(t/2), 2 - 2 cos(t/2))
    def pt(t):
        t = np.asarray(t, dtype=float)
        return np.stack([2 * np.sin(t / 2), 2 - 2 * np.cos(t / 2)], axis=-1)

    def tg(t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.cos(t / 2), np.sin(t / 2)], axis=-1)

    return Arm(pt, tg, np.pi)


class TestArm:
    def test_straight(self):
        arm = Arm.straight([1, 1], [3, 4], 10.0)
        np.testing.assert_allclose(arm.point(5.0), [1 + 3, 1 + 4])
        np.testing.assert_allclose(arm.tangent(2.0), [0.6, 0.8])

    def test_rejects_zero_direction_or_length(self):
        with pytest.raises(ValueError):
            Arm.straight([0, 0], [0, 0], 1.0)
        with pytest.raises(ValueError):
            Arm.straight([0, 0], [1, 0], 0.0)

    def test_polyline_arc_length_accuracy(self):
        arm = Arm.from_polyline([[0, 0], [1.0, 0.3], [2.0, 0.9], [3.0, 1.1]])
        tt = np.linspace(0.0, arm.length, 50001)
        chord = np.linalg.norm(np.diff(arm.point(tt), axis=0), axis=1).sum()
        assert abs(chord - arm.length) / arm.length <= 1e-4

    def test_polyline_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Arm.from_polyline([[0, 0]])
        with pytest.raises(ValueError):
            Arm.from_polyline([[0, 0], [0, 0]])

    def test_quarter_circle_arc_length(self):
        # numeric integration of the sampled curve confirms unit speed
        arm = quarter_circle_arm()
        tt = np.linspace(0.0, arm.length, 20001)
        chord = np.linalg.norm(np.diff(arm.point(tt), axis=0), axis=1).sum()
        assert chord == pytest.approx(np.pi, rel=1e-8)


class TestStarGraph:
    def test_junction_mismatch_rejected(self):
        with pytest.raises(ValueError, match="junction"):
            StarGraph([1.0, 0.0], [Arm.straight([0, 0], [1, 0], 2.0)])

    def test_non_arc_length_rejected(self):
        bad = Arm(lambda t: np.stack([2 * np.asarray(t, dtype=float),
                                      np.zeros_like(np.asarray(t, dtype=float))], axis=-1),
                  lambda t: np.broadcast_to([2.0, 0.0], (np.size(t), 2)),
                  1.0)
        with pytest.raises(ValueError, match="arc-length"):
            StarGraph([0, 0], [bad])

    def test_needs_an_arm(self):
        with pytest.raises(ValueError):
            StarGraph([0, 0], [])


class TestGraphPosition:
    def test_all_zero_maps_to_junction(self):
        g = three_arm_graph()
        np.testing.assert_allclose(graph_position(g, [0, 0, 0]), [0, 0])

    def test_straight_arc_length(self):
        g = three_arm_graph()
        np.testing.assert_allclose(graph_position(g, [2, 0, 0]), [2, 0])

    def test_quarter_circle_endpoint(self):
        g = StarGraph([0, 0], [quarter_circle_arm()])
        np.testing.assert_allclose(graph_position(g, [np.pi]), [2, 2], atol=1e-12)

    def test_rejects_dimension_mismatch_and_out_of_box(self):
        g = three_arm_graph()
        with pytest.raises(ValueError):
            graph_position(g, [0, 0])
        with pytest.raises(ValueError):
            graph_position(g, [6.0, 0, 0])
        with pytest.raises(ValueError):
            graph_position(g, [-0.1, 0, 0])


class TestJacobian:
    def test_straight_unit_tangent(self):
        g = three_arm_graph()
        jac = graph_position_jacobian(g, [2, 0, 0])
        np.testing.assert_allclose(jac[:, 0], [1, 0])

    def test_quarter_circle_tangent_at_end(self):
        g = StarGraph([0, 0], [quarter_circle_arm()])
        jac = graph_position_jacobian(g, [np.pi])
        np.testing.assert_allclose(jac[:, 0], [0, 1], atol=1e-12)

    def test_matches_finite_differences(self):
        g = StarGraph([0, 0], [
            Arm.from_polyline([[0, 0], [1.0, 0.4], [2.0, 0.5]]),
            Arm.straight([0, 0], [0, -1], 2.0),
        ])
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(50):
            p = rng.uniform(h, 1.0, 2)
            jac = graph_position_jacobian(g, p)
            for j in range(2):
                pp, pm = p.copy(), p.copy()
                pp[j] += h
                pm[j] -= h
                fd = (graph_position(g, pp) - graph_position(g, pm)) / (2 * h)
                np.testing.assert_allclose(jac[:, j], fd, rtol=1e-6, atol=1e-9)

    def test_single_positive_entry_point_is_on_network(self):
        g = three_arm_graph()
        rng = np.random.default_rng(4)
        for _ in range(50):
            j = rng.integers(0, 3)
            t = rng.uniform(0, g.arms[j].length)
            p = np.zeros(3)
            p[j] = t
            pos = graph_position(g, p)
            proj = project_to_network(g, pos)
            assert proj.distance <= 1e-9


class TestProjection:
    def test_member_point_projects_to_itself(self):
        g = three_arm_graph()
        proj = project_to_network(g, [2.5, 0.0])
        assert proj.arm_index == 0
        assert proj.arc_length == pytest.approx(2.5, abs=1e-9)
        assert proj.distance == pytest.approx(0.0, abs=1e-9)

    def test_perpendicular_foot_single_arm(self):
        g = StarGraph([0, 0], [Arm.straight([0, 0], [1, 0], 5.0)])
        proj = project_to_network(g, [3.0, 4.0])
        assert proj.arm_index == 0
        assert proj.arc_length == pytest.approx(3.0, abs=1e-12)
        assert proj.distance == pytest.approx(4.0, abs=1e-12)

    def test_beyond_arm_end_clamps(self):
        g = StarGraph([0, 0], [Arm.straight([0, 0], [1, 0], 5.0)])
        proj = project_to_network(g, [7.0, 1.0])
        assert proj.arm_index == 0
        assert proj.arc_length == pytest.approx(5.0, abs=1e-12)
        assert proj.distance == pytest.approx(np.sqrt(5.0), rel=1e-12)

    def test_against_dense_sampling_oracle(self):
        g = StarGraph([0, 0], [
            Arm.from_polyline([[0, 0], [0.8, 0.5], [1.6, 0.6], [2.5, 1.2]]),
            Arm.straight([0, 0], [-1, 1], 3.0),
        ])
        rng = np.random.default_rng(5)
        for _ in range(25):
            q = rng.uniform(-2, 3, 2)
            proj = project_to_network(g, q)
            best = np.inf
            for arm in g.arms:
                ts = np.linspace(0, arm.length, 10000)
                best = min(best, np.linalg.norm(arm.point(ts) - q, axis=1).min())
            assert proj.distance <= best + 1e-3

    def test_idempotent(self):
        g = three_arm_graph()
        rng = np.random.default_rng(6)
        for _ in range(20):
            q = rng.uniform(-3, 6, 2)
            pr1 = project_to_network(g, q)
            on_net = g.arms[pr1.arm_index].point(pr1.arc_length)
            pr2 = project_to_network(g, on_net)
            assert pr2.arm_index == pr1.arm_index
            assert pr2.arc_length == pytest.approx(pr1.arc_length, abs=1e-7)

    def test_junction_tie_breaks_to_lowest_arm(self):
        g = three_arm_graph()
        proj = project_to_network(g, [0.0, 0.0])
        assert proj.arm_index == 0
        assert proj.arc_length == pytest.approx(0.0, abs=1e-12)


class TestDecisionVector:
    def test_layout_size(self):
        lay = VariableLayout(n_stamps=5, n_arms=3)
        assert lay.size == 2 * 5 + 5 + 5 * 3 + 4

    def test_round_trip_is_bitwise(self):
        lay = VariableLayout(4, 2)
        x = np.random.default_rng(0).normal(size=lay.size)
        dv = DecisionVector(lay, x.copy())
        rebuilt = DecisionVector.from_parts(lay, dv.r_a, dv.e, dv.p, dv.s)
        assert np.array_equal(rebuilt.x, x)

    def test_views_share_memory(self):
        dv = DecisionVector(VariableLayout(3, 2))
        dv.r_a[1, 0] = 7.0
        assert dv.x[2] == 7.0

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            DecisionVector(VariableLayout(3, 2), np.zeros(5))


class TestParamsAndInstance:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            PhysicalParams(v_max_a=0, v_max_g=1, kappa=1, e_min=0, e_max=1,
                           s_min=0, s_max=1)
        with pytest.raises(ValueError):
            PhysicalParams(v_max_a=1, v_max_g=1, kappa=1, e_min=1, e_max=1,
                           s_min=0, s_max=1)
        with pytest.raises(ValueError):
            PhysicalParams(v_max_a=1, v_max_g=1, kappa=1, e_min=0, e_max=1,
                           s_min=2, s_max=1)

    def _params(self):
        return PhysicalParams(v_max_a=36, v_max_g=16.2, kappa=1.5,
                              e_min=0, e_max=0.4, s_min=0, s_max=10)

    def test_endpoints_must_lie_on_network(self):
        g = three_arm_graph()
        with pytest.raises(ValueError, match="network"):
            ProblemInstance(graph=g, uav_tasks=np.zeros((0, 2)),
                            r0=[0.5, 2.0], rf=[0, 0], params=self._params(),
                            n_stamps=4)

    def test_needs_two_stamps(self):
        g = three_arm_graph()
        with pytest.raises(ValueError):
            ProblemInstance(graph=g, uav_tasks=np.zeros((0, 2)),
                            r0=[0, 0], rf=[0, 0], params=self._params(),
                            n_stamps=1)

    def test_default_stamp_count(self):
        assert default_stamp_count(10, 3) == 41
        assert default_stamp_count(0, 1) == 5

    def test_instance_file_round_trip(self, tmp_path):
        g = StarGraph([0, 0], [
            Arm.straight([0, 0], [1, 0], 5.0),
            Arm.from_polyline([[0, 0], [-1.0, 0.6], [-2.0, 0.8]]),
        ])
        inst = ProblemInstance(graph=g, uav_tasks=[[1.0, 1.0], [2.0, -1.0]],
                               r0=[1.0, 0.0], rf=[0.0, 0.0],
                               params=self._params(), n_stamps=7)
        path = tmp_path / "instance.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        assert loaded.n_stamps == 7
        np.testing.assert_allclose(loaded.uav_tasks, inst.uav_tasks)
        np.testing.assert_allclose(loaded.r0, inst.r0)
        assert loaded.graph.n_arms == 2
        np.testing.assert_allclose(loaded.graph.arm_lengths,
                                   inst.graph.arm_lengths, rtol=1e-9)
        # dict round trip preserves every field
        d = instance_to_dict(loaded)
        again = instance_from_dict(d)
        np.testing.assert_allclose(again.graph.arm_lengths,
                                   loaded.graph.arm_lengths, rtol=1e-12)
