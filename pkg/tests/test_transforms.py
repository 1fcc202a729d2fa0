import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from voicegrasp import transforms as tf

angles = st.floats(-10.0, 10.0, allow_nan=False)


@given(angles)
def test_wrap_range(a):
    w = float(tf.wrap_angle(a))
    assert -np.pi < w <= np.pi
    assert np.isclose(np.cos(w), np.cos(a)) and np.isclose(np.sin(w), np.sin(a))


def test_wrap_pi_boundary():
    assert tf.wrap_angle(np.pi) == np.pi
    assert np.isclose(tf.wrap_angle(-np.pi), np.pi)


@settings(max_examples=50)
@given(st.lists(st.floats(-3.0, 3.0), min_size=6, max_size=6))
def test_pose_matrix_round_trip(m):
    T = tf.pose_to_matrix(m)
    np.testing.assert_allclose(tf.pose_to_matrix(tf.matrix_to_pose(T)), T, atol=1e-9)
    np.testing.assert_allclose(tf.invert(T) @ T, np.eye(4), atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_rotation_between_maps_a_to_b(a, b):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    R = tf.rotation_between(a, b)
    np.testing.assert_allclose(R @ (a / np.linalg.norm(a)), b / np.linalg.norm(b), atol=1e-9)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_rotation_between_antiparallel():
    R = tf.rotation_between([1, 0, 0], [-1, 0, 0])
    np.testing.assert_allclose(R @ [1, 0, 0], [-1, 0, 0], atol=1e-12)
    assert np.isclose(tf.rotation_angle(R), np.pi)
