from importlib import resources
from types import SimpleNamespace

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from voicegrasp import transforms as tf
from voicegrasp.errors import JointLimit, NoConvergence, NoFeasibleGrasp
from voicegrasp.motion import (POS_TOL, ORI_TOL, StompParams, Trajectory, _Obstacles, arm_fk,
                               arm_ik, flange_pose_base, load_arm_model, motion_cost,
                               plan_linear, pose_error, select_best, stomp_refine,
                               trajectory_cost)
from voicegrasp.synth import sphere_cloud


@pytest.fixture(scope="module")
def arm():
    return load_arm_model()


@pytest.fixture(scope="module")
def arm_doc():
    with resources.files("voicegrasp.data").joinpath("arm_ur5.yaml").open() as fh:
        return yaml.safe_load(fh)


def test_fk_documentation_block(arm, arm_doc):
    T = flange_pose_base(arm, np.zeros(6))
    np.testing.assert_allclose(T, arm_doc["fk_at_zero"], atol=1e-12)
    a = [r["a"] for r in arm_doc["dh"]]
    d = [r["d"] for r in arm_doc["dh"]]
    np.testing.assert_allclose(T[:3, 3], [a[1] + a[2], -(d[3] + d[5]), d[0] - d[4]], atol=1e-12)
    # camera-frame FK composes the base pose
    np.testing.assert_allclose(arm_fk(arm, np.zeros(6)), arm.base_pose @ T, atol=1e-12)


def test_joint1_half_turn_mirrors(arm):
    J = np.array([0.0, -0.4, 0.9, -0.3, 0.7, 0.2])
    p = flange_pose_base(arm, J)[:3, 3]
    q = flange_pose_base(arm, J + [np.pi, 0, 0, 0, 0, 0])[:3, 3]
    np.testing.assert_allclose(q, [-p[0], -p[1], p[2]], atol=1e-12)


def test_fk_joint_limit(arm):
    with pytest.raises(JointLimit):
        arm_fk(arm, [0, 0, 3.5, 0, 0, 0])


def test_ik_fixed_point(arm):
    J = np.array([0.3, -1.2, 1.0, -0.5, 0.8, 0.1])
    np.testing.assert_array_equal(arm_ik(arm, arm_fk(arm, J), J), J)


def test_ik_perturbed_seed(arm):
    J = np.array([0.3, -1.2, 1.0, -0.5, 0.8, 0.1])
    T = arm_fk(arm, J)
    e = pose_error(T, arm_fk(arm, arm_ik(arm, T, J + 0.1)))
    assert np.linalg.norm(e[:3]) <= POS_TOL and np.linalg.norm(e[3:]) <= ORI_TOL


def test_ik_unreachable(arm):
    T = arm_fk(arm, arm.home)
    T[:3, 3] += [10.0, 0, 0]
    with pytest.raises(NoConvergence) as err:
        arm_ik(arm, T, arm.home)
    assert err.value.residual[0] > 1.0


def test_ik_round_trip_property(arm):
    r = np.random.default_rng(11)
    lo = np.maximum(arm.joint_limits[:, 0], -np.pi) + 0.2
    hi = np.minimum(arm.joint_limits[:, 1], np.pi) - 0.2
    for _ in range(100):
        J = r.uniform(lo, hi)
        T = arm_fk(arm, J)
        sol = arm_ik(arm, T, J + r.uniform(-0.2, 0.2, 6))
        assert arm.within_limits(sol)
        e = pose_error(T, arm_fk(arm, sol))
        assert np.linalg.norm(e[:3]) <= POS_TOL and np.linalg.norm(e[3:]) <= ORI_TOL


def test_plan_linear():
    a, b = np.zeros(6), np.arange(6.0) / 10
    t = plan_linear(a, b, 11)
    np.testing.assert_array_equal(t.waypoints[0], a)
    np.testing.assert_array_equal(t.waypoints[-1], b)
    np.testing.assert_allclose(t.waypoints[5], (a + b) / 2)
    np.testing.assert_array_equal(plan_linear(a, b, 2).waypoints, [a, b])


def test_motion_cost_examples():
    assert motion_cost(Trajectory(np.ones((5, 6)))) == 0.0
    assert motion_cost(Trajectory([np.zeros(6), [1, 0, 0, 0, 0, 0]])) == pytest.approx(1.0)
    w = np.zeros((3, 6))
    w[1, 0] = 3.0
    w[2, :2] = [3.0, 4.0]
    assert motion_cost(Trajectory(w)) == pytest.approx(5.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 30))
def test_motion_cost_reversal(seed, n):
    w = np.random.default_rng(seed).normal(size=(n, 6))
    assert motion_cost(Trajectory(w)) == pytest.approx(motion_cost(Trajectory(w[::-1])), rel=1e-12)


START = np.array([0.0, -1.2, 1.2, -1.6, -1.57, 0.0])
GOAL = np.array([1.2, -1.0, 0.8, -1.4, -1.57, 0.5])


def test_stomp_zero_iterations(arm):
    t = plan_linear(START, GOAL, 10)
    assert stomp_refine(t, arm, None, StompParams(iterations=0)) is t


def test_stomp_no_obstacles(arm):
    t = plan_linear(START, GOAL, 10)
    out = stomp_refine(t, arm, None, StompParams(iterations=20))
    assert trajectory_cost(out, arm) <= trajectory_cost(t, arm)
    np.testing.assert_array_equal(out.waypoints[[0, -1]], t.waypoints[[0, -1]])


def test_stomp_obstacle_on_midpoint(arm):
    t = plan_linear(START, GOAL, 15)
    obs = _Obstacles(arm, None)
    centers, _ = obs.proxies(t.waypoints[7:8])
    cloud, _ = sphere_cloud(centers[0, -1], 0.06, 800)
    params = StompParams(iterations=30)
    out = stomp_refine(t, arm, cloud, params)
    before = _Obstacles(arm, cloud).clearance(t.waypoints)[1:-1].min()
    after = _Obstacles(arm, cloud).clearance(out.waypoints)[1:-1].min()
    assert after >= before
    assert trajectory_cost(out, arm, cloud, params) <= trajectory_cost(t, arm, cloud, params)
    np.testing.assert_array_equal(out.waypoints[[0, -1]], t.waypoints[[0, -1]])
    assert all(arm.within_limits(w) for w in out.waypoints)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_stomp_never_worse(seed):
    arm = load_arm_model()
    r = np.random.default_rng(seed)
    t = Trajectory(plan_linear(START, GOAL, 8).waypoints + np.r_[0, 1, 1, 1, 1, 1, 1, 0][:, None]
                   * r.normal(0, 0.05, (8, 6)))
    params = StompParams(iterations=5, seed=seed)
    out = stomp_refine(t, arm, None, params)
    assert trajectory_cost(out, arm, None, params) <= trajectory_cost(t, arm, None, params)
    np.testing.assert_array_equal(out.waypoints[[0, -1]], t.waypoints[[0, -1]])


def hand_pose_for(arm, J):
    return arm_fk(arm, J) @ tf.invert(arm.hand_from_flange)


def candidates_at(arm, deltas):
    out = []
    for k, d in enumerate(deltas):
        J = arm.home + np.r_[0, 0, 0, 0, 0, d]
        out.append((0.5, SimpleNamespace(name=k, pose=SimpleNamespace(matrix=hand_pose_for(arm, J)))))
    return out


FAST = StompParams(iterations=0)


def test_select_single(arm):
    best, plans = select_best(candidates_at(arm, [0.7]), arm, arm.home, None, 2, FAST)
    assert best.index == 0 and len(plans) == 1
    assert best.cost == pytest.approx(0.7, abs=1e-3)


def test_select_argmin(arm):
    best, plans = select_best(candidates_at(arm, [2.0, 1.0]), arm, arm.home, None, 2, FAST)
    assert [p.cost for p in plans] == pytest.approx([2.0, 1.0], abs=1e-3)
    assert best.index == 1


def test_select_tie_breaks_by_quality(arm):
    ranked = candidates_at(arm, [1.0, 1.0])
    ranked[1] = (0.9, ranked[1][1])
    best, _ = select_best(ranked, arm, arm.home, None, 2, FAST)
    assert best.index == 1


def test_select_all_unreachable(arm):
    far = tf.rigid(t=[10.0, 0, 0])
    ranked = [(0.5, SimpleNamespace(pose=SimpleNamespace(matrix=far)))] * 3
    with pytest.raises(NoFeasibleGrasp):
        select_best(ranked, arm, arm.home, None, 2, FAST)


def test_select_skips_unreachable(arm):
    far = (0.9, SimpleNamespace(pose=SimpleNamespace(matrix=tf.rigid(t=[10.0, 0, 0]))))
    best, plans = select_best([far] + candidates_at(arm, [0.4]), arm, arm.home, None, 2, FAST)
    assert best.index == 1 and len(plans) == 1


@pytest.mark.parametrize("scale", [0.5, 1.5])
def test_argmin_invariant_under_scaling(arm, scale):
    base = [0.9, 0.4, 0.6]
    chosen = select_best(candidates_at(arm, base), arm, arm.home, None, 2, FAST)[0].index
    scaled = select_best(candidates_at(arm, [scale * d for d in base]), arm, arm.home, None, 2,
                         FAST)[0].index
    assert chosen == scaled == 1


@pytest.mark.parametrize("n", [3, 4, 5])
def test_stomp_short_trajectories(arm, n):
    t = plan_linear(START, GOAL, n)
    out = stomp_refine(t, arm, None, StompParams(iterations=5))
    assert out.waypoints.shape == (n, 6)
    np.testing.assert_array_equal(out.waypoints[[0, -1]], t.waypoints[[0, -1]])
