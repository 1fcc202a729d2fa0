import copy

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from voicegrasp import transforms as tf
from voicegrasp.errors import JointLimit, NoIntersection, OutOfRange, ValidationError
from voicegrasp.hand import (DEFAULT_TOL, N_SAMPLES, FingerContact, IntersectionSet,
                             finger_fk, finger_ik, intersect_object, load_hand_config, place_hand,
                             thumb_forward, thumb_inverse)
from voicegrasp.scene import PointCloud
from voicegrasp.synth import default_hand_document, sphere_cloud


def test_default_hand_shape(hand):
    assert hand.finger_paths.shape == (4, N_SAMPLES, 3)
    assert hand.thumb_grid.shape == (16, 16, 2)
    assert np.all(np.diff(hand.finger_angles, axis=1) > 0)
    # human-scale: max aperture along the pinch axis on the order of 100 mm or less
    assert 0 < np.linalg.norm(np.diff(hand.pinch_axis, axis=0)) <= 0.1


def test_dense_polylines_resampled():
    doc = default_hand_document()
    path = np.asarray(doc["fingers"][0]["path"])
    a = np.linspace(path[0, 0], path[-1, 0], 100)
    dense = np.column_stack([a] + [np.interp(a, path[:, 0], path[:, k]) for k in (1, 2, 3)])
    doc["fingers"][0]["path"] = dense.tolist()
    cfg = load_hand_config(doc)
    assert cfg.finger_paths.shape == (4, N_SAMPLES, 3)


def test_non_monotonic_angles_rejected():
    doc = copy.deepcopy(default_hand_document())
    path = [list(row) for row in doc["fingers"][1]["path"]]
    path[5][0] = path[3][0]
    doc["fingers"][1]["path"] = path
    with pytest.raises(ValidationError) as err:
        load_hand_config(doc)
    assert "fingers[1].path" in str(err.value)


def test_zero_length_pinch_axis_rejected():
    doc = copy.deepcopy(default_hand_document())
    doc["pinch_axis"] = [[0, 0, 0.08], [0, 0, 0.08]]
    with pytest.raises(ValidationError) as err:
        load_hand_config(doc)
    assert "pinch_axis" in str(err.value)


def test_non_planar_thumb_polygon_rejected():
    doc = copy.deepcopy(default_hand_document())
    doc["thumb"]["polygon"][0][0] += 1e-3
    with pytest.raises(ValidationError):
        load_hand_config(doc)


def test_place_identity(hand):
    posed = place_hand(hand, np.zeros(6))
    np.testing.assert_allclose(posed.finger_paths, hand.finger_paths)
    np.testing.assert_allclose(posed.pinch_axis, hand.pinch_axis)


def test_place_translation(hand):
    posed = place_hand(hand, [0.1, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(posed.finger_paths - hand.finger_paths, np.broadcast_to(
        [0.1, 0, 0], hand.finger_paths.shape), atol=1e-15)
    np.testing.assert_allclose(posed.thumb_origin, hand.thumb_origin + [0.1, 0, 0])


def test_place_rotation_z(hand):
    posed = place_hand(hand, [0, 0, 0, 0, 0, np.pi / 2])
    d = posed.pinch_axis[1] - posed.pinch_axis[0]
    d0 = hand.pinch_axis[1] - hand.pinch_axis[0]
    np.testing.assert_allclose(d, [-d0[1], d0[0], d0[2]], atol=1e-9)
    seg = np.linalg.norm(np.diff(posed.finger_paths, axis=1), axis=2)
    seg0 = np.linalg.norm(np.diff(hand.finger_paths, axis=1), axis=2)
    np.testing.assert_allclose(seg, seg0, atol=1e-12)


def brute_force_contacts(posed, cloud, tol):
    """First polyline sample with any cloud point within tol, by exhaustive distances."""
    out = {}
    for f in range(4):
        d = np.linalg.norm(posed.finger_paths[f][:, None, :] - cloud.points[None], axis=2)
        hits = np.nonzero(d.min(axis=1) <= tol)[0]
        if len(hits):
            j = hits[0]
            out[f] = (j, cloud.points[np.argmin(d[j])])
    return out


def test_sphere_fixture_matches_brute_force(hand, sphere40):
    posed = place_hand(hand, np.zeros(6))
    s = intersect_object(posed, sphere40, DEFAULT_TOL)
    assert s.n_fingers == 4 and len(s.thumb_points) > 0
    ref = brute_force_contacts(posed, sphere40, DEFAULT_TOL)
    assert sorted(ref) == [c.finger for c in s.finger_contacts]
    for c in s.finger_contacts:
        j, p = ref[c.finger]
        assert c.sample == j
        np.testing.assert_allclose(c.point, p)
    # inward normal
    for c in s.finger_contacts:
        assert np.dot(c.normal, hand.pinch_midpoint - c.point) > 0


def test_far_object_no_intersection(hand, sphere40):
    far = PointCloud(sphere40.points + [0, 0, 1.0], sphere40.normals)
    with pytest.raises(NoIntersection):
        intersect_object(place_hand(hand, np.zeros(6)), far)


def test_thumb_only_slab(hand):
    y, z = np.meshgrid(np.linspace(-0.02, 0.02, 21), np.linspace(0.07, 0.09, 11))
    pts = np.column_stack([np.full(y.size, -0.03), y.ravel(), z.ravel()])
    nrm = np.tile([-1.0, 0, 0], (len(pts), 1))
    s = intersect_object(place_hand(hand, np.zeros(6)), PointCloud(pts, nrm))
    assert s.n_fingers == 0 and len(s.thumb_points) > 0
    # ordered by plane coordinate
    uv = s.thumb_uv
    assert np.all(np.lexsort((uv[:, 1], uv[:, 0])) == np.arange(len(uv)))


def test_every_contact_within_tol(hand, sphere40):
    s = intersect_object(place_hand(hand, np.zeros(6)), sphere40)
    pts, _ = s.contact_points()
    allp = np.vstack([pts, s.thumb_points])
    d = np.linalg.norm(allp[:, None] - sphere40.points[None], axis=2).min(axis=1)
    assert d.max() <= 1e-12  # contacts are cloud points themselves
    for c in s.finger_contacts:
        assert np.linalg.norm(hand.finger_paths[c.finger, c.sample] - c.point) <= DEFAULT_TOL


def test_rigid_invariance(hand, sphere40):
    base = intersect_object(place_hand(hand, np.zeros(6)), sphere40)
    R = Rotation.from_euler("xyz", [0.3, -0.7, 1.9]).as_matrix()
    T = tf.rigid(R, [0.2, -0.1, 0.5])
    moved = PointCloud(tf.apply(T, sphere40.points), sphere40.normals @ R.T)
    s = intersect_object(place_hand(hand, T), moved)
    a = np.array([c.point for c in s.finger_contacts])
    b = tf.apply(T, np.array([c.point for c in base.finger_contacts]))
    np.testing.assert_allclose(a, b, atol=1e-6)
    np.testing.assert_allclose(s.thumb_points, tf.apply(T, base.thumb_points), atol=1e-6)


def test_ik_sample_lookup_and_open_fingers(hand):
    k = 11
    c = FingerContact(hand.finger_paths[0, k], np.array([0, 0, 1.0]), 0,
                      float(hand.finger_angles[0, k]), k)
    h = finger_ik(hand, IntersectionSet((c,)))
    assert h[0] == hand.finger_angles[0, k]
    assert h[2] == hand.joint_limits[2, 0]
    assert np.all(h >= hand.joint_limits[:, 0]) and np.all(h <= hand.joint_limits[:, 1])


def test_thumb_grid_round_trip(hand):
    res1 = np.diff(hand.thumb_theta1).max()
    res2 = np.diff(hand.thumb_theta2).max()
    for i, j in [(0, 0), (3, 7), (15, 15), (8, 2)]:
        uv = hand.thumb_grid[i, j]
        s = IntersectionSet((), hand.plane_point(uv)[None], np.array([[1.0, 0, 0]]), uv[None],
                            np.zeros(1))
        h = finger_ik(hand, s)
        assert abs(h[4] - hand.thumb_theta1[i]) <= res1
        assert abs(h[5] - hand.thumb_theta2[j]) <= res2
        np.testing.assert_allclose(thumb_forward(hand, h[4], h[5]), uv, atol=1e-9)


def test_thumb_outside_grid(hand):
    with pytest.raises(OutOfRange):
        thumb_inverse(hand, [1.0, 1.0])


def test_fk_at_samples(hand):
    k = 20
    h = hand.open_joints
    h[:4] = hand.finger_angles[:, k]
    tips = finger_fk(hand, h)
    np.testing.assert_allclose(tips[:4], hand.finger_paths[:, k], atol=1e-15)


def test_fk_joint_limit(hand):
    h = hand.open_joints
    h[1] = hand.joint_limits[1, 1] + 0.1
    with pytest.raises(JointLimit):
        finger_fk(hand, h)


def test_fk_ik_property_over_random_fixtures(hand):
    r = np.random.default_rng(21)
    seg = np.linalg.norm(np.diff(hand.finger_paths, axis=1), axis=2).max(axis=1)
    cell = np.linalg.norm(np.diff(hand.thumb_grid, axis=0), axis=2).max()
    done = attempts = 0
    while done < 100:
        attempts += 1
        assert attempts < 2000
        centre = hand.pinch_midpoint + r.uniform(-0.02, 0.02, 3)
        pts, nrm = sphere_cloud(centre, r.uniform(0.02, 0.05), 1500, seed=int(r.integers(1 << 30)))
        cloud = PointCloud(pts, nrm)
        try:
            s = intersect_object(place_hand(hand, np.zeros(6)), cloud)
            h = finger_ik(hand, s)
        except (NoIntersection, OutOfRange):
            continue
        tips = finger_fk(hand, h)
        for c in s.finger_contacts:
            assert np.linalg.norm(tips[c.finger] - c.point) <= DEFAULT_TOL + seg[c.finger]
        ti = s.thumb_index()
        if ti is not None:
            assert np.linalg.norm(tips[4] - s.thumb_points[ti]) <= DEFAULT_TOL + cell
        done += 1
