"""Synthetic fixtures: the shipped hand document, test clouds and the demo scene.

``python -m voicegrasp.synth OUT_DIR`` regenerates the bundled data files.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import transforms as tf
from .scene import BinaryMask, CameraIntrinsics, DepthImage, save_depth

# hand geometry (meters / radians)
FINGER_RADIUS = 0.08
FINGER_Y = (0.027, 0.009, -0.009, -0.027)
FINGER_X = 0.03
FINGER_RANGE = (-0.7, 0.9)
THUMB_X = -0.03
THUMB_T1 = (-0.5, 0.5)
THUMB_T2 = (0.0, 1.0)
THUMB_GRID = 16
PINCH_Z = 0.08


def _thumb_uv(t1, t2):
    r = 0.05 + 0.045 * t2
    return np.array([r * np.sin(t1), r * np.cos(t1)])


def default_hand_document():
    """Human-scale 6-DoF five-finger hand (finger length 80 mm, aperture ~105 mm)."""
    angles = np.linspace(*FINGER_RANGE, 32)
    path = [[float(a), float(-FINGER_RADIUS * np.sin(a)), 0.0, float(FINGER_RADIUS * np.cos(a))]
            for a in angles]
    fingers = [{"name": name, "base": {"translation": [FINGER_X, y, 0.0], "rpy": [0, 0, 0]},
                "path": path} for name, y in zip(("index", "middle", "ring", "little"), FINGER_Y)]
    t1 = np.linspace(*THUMB_T1, THUMB_GRID)
    t2 = np.linspace(*THUMB_T2, THUMB_GRID)
    grid = [[_thumb_uv(a, b).tolist() for b in t2] for a in t1]
    g = np.array(grid)
    boundary = np.concatenate([g[:, 0], g[-1, 1:], g[-2::-1, -1], g[0, -2:0:-1]])
    origin = np.array([THUMB_X, 0.0, 0.0])
    u_axis, v_axis = np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])
    polygon = [(origin + p[0] * u_axis + p[1] * v_axis).tolist() for p in boundary]
    limits = [list(FINGER_RANGE)] * 4 + [list(THUMB_T1), list(THUMB_T2)]
    return {
        "name": "default-five-finger",
        "fingers": fingers,
        "joint_limits": limits,
        "thumb": {
            "plane": {"point": origin.tolist(), "normal": [1.0, 0.0, 0.0], "u_axis": u_axis.tolist()},
            "polygon": polygon,
            "joint_map": {"theta1": t1.tolist(), "theta2": t2.tolist(), "grid": grid},
        },
        "pinch_axis": [[THUMB_X, 0.0, PINCH_Z], [FINGER_X, 0.0, PINCH_Z]],
    }


# --- clouds --------------------------------------------------------------------

def sphere_cloud(center, radius, n=4000, seed=0):
    """Fibonacci-sphere points with outward normals."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    nrm = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    return np.asarray(center) + radius * nrm, nrm


def cylinder_cloud(radius=0.03, length=0.2, n=1000, sigma=0.001, axis=(0, 0, 1),
                   center=(0, 0, 0), seed=0):
    """Noisy samples on a cylinder's side surface; returns (points, unit axis)."""
    rng = np.random.default_rng(seed)
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    R = tf.rotation_between([0, 0, 1], axis)
    th = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(-length / 2, length / 2, n)
    local = np.stack([radius * np.cos(th), radius * np.sin(th), z], axis=1)
    pts = local @ R.T + np.asarray(center) + rng.normal(0, sigma, (n, 3))
    return pts, axis


# --- demo scene --------------------------------------------------------------------

SCENE_INTRINSICS = dict(fx=600.0, fy=600.0, cx=319.5, cy=239.5, width=640, height=480)
# camera pose in the robot base frame: 0.75 m above the table looking straight down
CAMERA_IN_BASE = tf.rigid(np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]),
                          [0.45, 0.0, 0.75])
CYLINDER = dict(radius=0.03, length=0.14, center=(0.45, 0.05, 0.03), yaw=np.deg2rad(30.0))


def cylinder_axis_base(yaw=CYLINDER["yaw"]):
    return np.array([np.cos(yaw), np.sin(yaw), 0.0])


def _ray_cylinder(o, d, c, a, r, half):
    """Nearest positive hit distance of rays (o, d) with a capped cylinder."""
    oc = o - c
    d_perp = d - np.outer(d @ a, a)
    o_perp = oc - np.outer(oc @ a, a) if oc.ndim == 2 else oc - (oc @ a) * a
    A = np.einsum("ij,ij->i", d_perp, d_perp)
    B = 2 * (d_perp @ o_perp)
    C = o_perp @ o_perp - r * r
    disc = B * B - 4 * A * C
    t = np.full(len(d), np.inf)
    ok = disc >= 0
    for sgn in (-1.0, 1.0):
        with np.errstate(invalid="ignore", divide="ignore"):
            ts = (-B + sgn * np.sqrt(np.where(ok, disc, 0))) / (2 * A)
        h = (oc @ a) + ts * (d @ a)
        good = ok & (ts > 0) & (np.abs(h) <= half)
        t = np.where(good & (ts < t), ts, t)
    for cap in (-half, half):
        with np.errstate(invalid="ignore", divide="ignore"):
            ts = (cap - oc @ a) / (d @ a)
        hit = o + ts[:, None] * d
        rad = hit - c - np.outer(hit @ a - c @ a, a)
        good = (ts > 0) & (np.einsum("ij,ij->i", rad, rad) <= r * r)
        t = np.where(good & (ts < t), ts, t)
    return t


def render_cylinder_scene(noise=0.0003, seed=7):
    """Ray-cast the demo scene; returns (rgb, DepthImage, BinaryMask, CameraIntrinsics)."""
    intr = CameraIntrinsics(**SCENE_INTRINSICS)
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    d_cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u, float)],
                     axis=-1).reshape(-1, 3)
    R, o = CAMERA_IN_BASE[:3, :3], CAMERA_IN_BASE[:3, 3]
    d_base = d_cam @ R.T
    t_cyl = _ray_cylinder(o, d_base, np.asarray(CYLINDER["center"]), cylinder_axis_base(),
                          CYLINDER["radius"], CYLINDER["length"] / 2)
    t_tab = -o[2] / d_base[:, 2]  # table plane z = 0
    on_obj = t_cyl < t_tab
    t = np.where(on_obj, t_cyl, t_tab)
    z = t * d_cam[:, 2]
    z = z + np.random.default_rng(seed).normal(0, noise, z.shape)
    depth = DepthImage(z.reshape(intr.height, intr.width))
    mask = BinaryMask(on_obj.reshape(intr.height, intr.width))
    rgb = np.empty((intr.height, intr.width, 3), np.uint8)
    rgb[:] = (150, 140, 125)
    rgb[mask.bits] = (200, 30, 30)
    return rgb, depth, mask, intr


def write_scene(out_dir, depth_scale=0.0001):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rgb, depth, mask, intr = render_cylinder_scene()
    Image.fromarray(rgb).save(out / "rgb.png")
    save_depth(depth, out / "depth.png", depth_scale)
    Image.fromarray(mask.bits.astype(np.uint8) * 255).save(out / "mask.png")
    (out / "intrinsics.yaml").write_text(yaml.safe_dump(SCENE_INTRINSICS, sort_keys=False))


class _NoAliasDumper(yaml.SafeDumper):
    def ignore_aliases(self, data):
        return True


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, help="data directory to (re)write")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "hand_default.yaml").write_text(
        "# Generated by `python -m voicegrasp.synth`. Hand frame: palm at origin, fingers toward +z,\n"
        "# pinch axis from thumb (-x) to fingers (+x). Finger paths are given in each finger's base frame.\n"
        + yaml.dump(default_hand_document(), Dumper=_NoAliasDumper, sort_keys=False,
                    default_flow_style=None))
    write_scene(args.out / "scenes" / "cylinder")


if __name__ == "__main__":
    main()
