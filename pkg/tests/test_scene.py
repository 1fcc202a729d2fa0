import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voicegrasp.errors import ConfigError, EmptySelection, MissingField, ParseError, ValidationError
from voicegrasp.scene import (BinaryMask, CameraIntrinsics, DepthImage, PointCloud, SceneFrame,
                              back_project, estimate_normals, load_cloud, load_depth, load_scene,
                              save_cloud, save_depth)
from voicegrasp.synth import sphere_cloud

INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def single_pixel_depth(u, v, z, intr=INTR):
    d = np.zeros((intr.height, intr.width))
    d[v, u] = z
    return DepthImage(d)


def test_principal_point_maps_to_optical_axis():
    cloud = back_project(single_pixel_depth(320, 240, 1.0), INTR)
    np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(cloud.pixel_index, [[320, 240]])


def test_unit_tangent_pixel():
    intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=10.0, cy=10.0, width=200, height=40)
    cloud = back_project(single_pixel_depth(110, 10, 2.0, intr), intr)
    np.testing.assert_allclose(cloud.points, [[2.0, 0.0, 2.0]])


def test_three_by_three_plane():
    intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=1.0, cy=1.0, width=3, height=3)
    cloud = back_project(DepthImage(np.full((3, 3), 0.5)), intr)
    assert len(cloud) == 9
    np.testing.assert_allclose(cloud.points[:, 2], 0.5)
    # hand-computed: (u - 1) * 0.5 / 100
    np.testing.assert_allclose(sorted(set(np.round(cloud.points[:, 0], 9))), [-0.005, 0.0, 0.005])
    np.testing.assert_allclose(sorted(set(np.round(cloud.points[:, 1], 9))), [-0.005, 0.0, 0.005])


def test_back_project_empty_selection():
    with pytest.raises(EmptySelection):
        back_project(DepthImage(np.zeros((480, 640))), INTR)
    depth = DepthImage(np.ones((480, 640)))
    with pytest.raises(EmptySelection):
        back_project(depth, INTR, BinaryMask(np.zeros((480, 640), bool)))


def test_mask_dimension_mismatch():
    with pytest.raises(ValidationError):
        back_project(DepthImage(np.ones((480, 640))), INTR, BinaryMask(np.ones((10, 10), bool)))


def test_invalid_depth_values_are_dropped():
    d = np.ones((480, 640))
    d[0, :3] = [np.nan, -1.0, np.inf]
    img = DepthImage(d)
    assert not img.valid[0, :3].any()
    assert len(back_project(img, INTR)) == 480 * 640 - 3


def test_intrinsics_invariants():
    with pytest.raises(ValidationError):
        CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 4, 4)
    with pytest.raises(ValidationError):
        CameraIntrinsics(1.0, 1.0, 4.0, 1.0, 4, 4)
    with pytest.raises(ValidationError):
        CameraIntrinsics.from_mapping({"fx": 1.0})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 63), st.integers(0, 47), st.floats(0.2, 5.0))
def test_projection_round_trip(u, v, z):
    intr = CameraIntrinsics(fx=70.0, fy=65.0, cx=31.5, cy=23.5, width=64, height=48)
    cloud = back_project(single_pixel_depth(u, v, z, intr), intr)
    np.testing.assert_allclose(intr.project(cloud.points)[0], [u, v], atol=0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_masked_output_is_subset(seed):
    r = np.random.default_rng(seed)
    intr = CameraIntrinsics(fx=50.0, fy=50.0, cx=8.0, cy=6.0, width=16, height=12)
    d = r.uniform(0.3, 2.0, (12, 16)) * (r.random((12, 16)) > 0.2)
    m = r.random((12, 16)) > 0.5
    if not (m & (d > 0)).any():
        return
    full = {tuple(p) for p in back_project(DepthImage(d), intr).points.round(12)}
    sub = {tuple(p) for p in back_project(DepthImage(d), intr, BinaryMask(m)).points.round(12)}
    assert sub <= full


def test_plane_normals_face_camera(rng):
    xy = rng.uniform(-0.2, 0.2, (400, 2))
    cloud = estimate_normals(PointCloud(np.column_stack([xy, np.ones(400)])), k=12)
    np.testing.assert_allclose(cloud.normals, np.tile([0.0, 0.0, -1.0], (400, 1)), atol=1e-9)


def test_sphere_normal_nearest_camera():
    pts, _ = sphere_cloud([0.0, 0.0, 2.0], 1.0, 3000)
    cloud = estimate_normals(PointCloud(pts), k=20)
    i = np.argmin(np.linalg.norm(pts, axis=1))
    angle = np.degrees(np.arccos(np.clip(cloud.normals[i] @ [0.0, 0.0, -1.0], -1, 1)))
    assert angle < 5.0


def test_collinear_points_flag_degenerate():
    cloud = estimate_normals(PointCloud([[0, 0, 1.0], [0.1, 0, 1.0], [0.2, 0, 1.0]]), k=3)
    assert cloud.degenerate.all()
    np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-6)


def test_normals_need_enough_points():
    with pytest.raises(ValidationError):
        estimate_normals(PointCloud(np.zeros((2, 3)) + [0, 0, 1]), k=3)
    with pytest.raises(ValidationError):
        estimate_normals(PointCloud(np.ones((10, 3))), k=2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_normals_unit_and_camera_facing(seed):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(60, 3)) * [0.1, 0.1, 0.05] + [0, 0, 1.0]
    cloud = estimate_normals(PointCloud(pts), k=8)
    np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-6)
    assert np.all(np.einsum("ij,ij->i", cloud.normals, -pts) >= 0)


def test_cloud_round_trip(tmp_path, rng):
    pts = rng.uniform(-1, 1, (100, 3))
    n = rng.normal(size=(100, 3))
    cloud = PointCloud(pts, n / np.linalg.norm(n, axis=1, keepdims=True))
    save_cloud(cloud, tmp_path / "c.ply")
    back = load_cloud(tmp_path / "c.ply")
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)
    np.testing.assert_allclose(back.normals, cloud.normals, atol=1e-6)
    save_cloud(PointCloud(pts), tmp_path / "p.ply")
    assert load_cloud(tmp_path / "p.ply").normals is None


def test_zero_vertex_file(tmp_path):
    p = tmp_path / "e.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\n"
                 "property float y\nproperty float z\nend_header\n")
    with pytest.raises(EmptySelection):
        load_cloud(p)


@pytest.mark.parametrize("text,line", [
    ("plx\n", 1),
    ("ply\nformat binary_little_endian 1.0\nend_header\n", 2),
    ("ply\nformat ascii 1.0\nelement vertex x\nend_header\n", 3),
    ("ply\nformat ascii 1.0\nbogus\nend_header\n", 3),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
     "property float z\nend_header\n1 2 oops\n", 8),
])
def test_malformed_files_report_line(tmp_path, text, line):
    p = tmp_path / "bad.ply"
    p.write_text(text)
    with pytest.raises(ParseError) as err:
        load_cloud(p)
    assert err.value.line == line


def test_missing_coordinate_field(tmp_path):
    p = tmp_path / "m.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                 "property float y\nend_header\n1 2\n")
    with pytest.raises(MissingField):
        load_cloud(p)


def test_depth_raster_round_trip(tmp_path, rng):
    d = DepthImage(rng.uniform(0.3, 3.0, (12, 16)) * (rng.random((12, 16)) > 0.1))
    save_depth(d, tmp_path / "d.png")
    back = load_depth(tmp_path / "d.png")
    np.testing.assert_allclose(back.values, d.values, atol=0.0005 + 1e-12)
    np.testing.assert_array_equal(back.valid, d.valid)


def test_scene_dimension_check():
    with pytest.raises(ValidationError):
        SceneFrame(np.zeros((480, 640, 3)), DepthImage(np.ones((480, 640))),
                   BinaryMask(np.ones((48, 64), bool)), INTR)


def test_load_scene_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scene({"rgb": "a.png", "depth": "b.png", "mask": "c.png", "intrinsics": "i.yaml"},
                   tmp_path)
