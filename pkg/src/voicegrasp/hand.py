"""Dexterous hand workspace model.

Each of the four fingers is a single-DoF fingertip path sampled as a
polyline (angle -> point). The thumb's two DoF sweep a planar region
described by a (theta1, theta2) -> plane-coordinate grid. A fixed pinch
axis models thumb/finger opposition. All geometry lives in the hand frame:
palm at the origin, fingers reaching toward +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial import cKDTree

from . import transforms as tf
from .errors import ConfigError, JointLimit, NoIntersection, OutOfRange, ValidationError
from .scene import PointCloud

N_SAMPLES = 32
DEFAULT_TOL = 0.005
FINGER_NAMES = ("index", "middle", "ring", "little")


@dataclass(frozen=True)
class HandConfig:
    finger_bases: np.ndarray  # (4, 4, 4) hand <- finger base
    finger_angles: np.ndarray  # (4, N)
    finger_paths: np.ndarray  # (4, N, 3) fingertip samples, hand frame
    thumb_origin: np.ndarray
    thumb_normal: np.ndarray
    thumb_u: np.ndarray
    thumb_v: np.ndarray
    thumb_polygon: np.ndarray  # (P, 2) plane coordinates
    thumb_theta1: np.ndarray  # (G,)
    thumb_theta2: np.ndarray  # (G,)
    thumb_grid: np.ndarray  # (G, G, 2) plane coordinates at (theta1_i, theta2_j)
    joint_limits: np.ndarray  # (6, 2)
    pinch_axis: np.ndarray  # (2, 3)
    name: str = "hand"

    @property
    def pinch_direction(self):
        d = self.pinch_axis[1] - self.pinch_axis[0]
        return d / np.linalg.norm(d)

    @property
    def pinch_midpoint(self):
        return self.pinch_axis.mean(axis=0)

    @property
    def open_joints(self):
        return self.joint_limits[:, 0].copy()

    def plane_point(self, uv):
        uv = np.asarray(uv, dtype=float)
        return self.thumb_origin + uv[..., :1] * self.thumb_u + uv[..., 1:2] * self.thumb_v


@dataclass(frozen=True)
class PosedHand:
    """Hand workspace expressed in the scene (camera) frame."""

    config: HandConfig
    transform: np.ndarray  # camera <- hand
    finger_paths: np.ndarray
    thumb_origin: np.ndarray
    thumb_normal: np.ndarray
    thumb_u: np.ndarray
    thumb_v: np.ndarray
    pinch_axis: np.ndarray


@dataclass(frozen=True)
class FingerContact:
    point: np.ndarray
    normal: np.ndarray  # inward (into the object)
    finger: int
    angle: float
    sample: int


@dataclass(frozen=True)
class IntersectionSet:
    finger_contacts: tuple
    thumb_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    thumb_normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    thumb_uv: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    thumb_axis_dist: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_fingers(self):
        return len(self.finger_contacts)

    @property
    def is_empty(self):
        return self.n_fingers == 0 and len(self.thumb_points) == 0

    def thumb_index(self):
        """Index of the thumb-curve point nearest the pinch axis (None if no curve)."""
        if len(self.thumb_points) == 0:
            return None
        return int(np.argmin(self.thumb_axis_dist))

    def contact_points(self):
        """Finger contacts plus the thumb contact, as (points, inward normals)."""
        pts = [c.point for c in self.finger_contacts]
        nrm = [c.normal for c in self.finger_contacts]
        ti = self.thumb_index()
        if ti is not None:
            pts.append(self.thumb_points[ti])
            nrm.append(self.thumb_normals[ti])
        return np.array(pts).reshape(-1, 3), np.array(nrm).reshape(-1, 3)


# --- loading ---------------------------------------------------------------

def _vec(doc, key, n=3):
    try:
        v = np.asarray(doc[key], dtype=float)
    except KeyError:
        raise ValidationError(key, "missing") from None
    except (TypeError, ValueError):
        raise ValidationError(key, "not numeric") from None
    if v.shape != (n,):
        raise ValidationError(key, f"expected {n} values")
    return v


def _transform(doc, where):
    t = np.asarray(doc.get("translation", [0, 0, 0]), dtype=float)
    rpy = np.asarray(doc.get("rpy", [0, 0, 0]), dtype=float)
    if t.shape != (3,) or rpy.shape != (3,):
        raise ValidationError(where, "translation and rpy need 3 values each")
    return tf.pose_to_matrix(np.concatenate([t, rpy]))


def _resample(angles, pts, n):
    if len(angles) <= n:
        return angles, pts
    new = np.linspace(angles[0], angles[-1], n)
    return new, np.stack([np.interp(new, angles, pts[:, k]) for k in range(3)], axis=1)


def load_hand_config(document) -> HandConfig:
    """Build a validated HandConfig from a parsed document (mapping) or a path."""
    if isinstance(document, (str, Path)):
        path = Path(document)
        if not path.exists():
            raise ConfigError(f"hand config not found: {path}")
        document = yaml.safe_load(path.read_text())
    doc = document
    limits = np.asarray(doc.get("joint_limits", []), dtype=float)
    if limits.shape != (6, 2) or np.any(limits[:, 0] >= limits[:, 1]):
        raise ValidationError("joint_limits", "need 6 (lo, hi) pairs with lo < hi")

    fingers = doc.get("fingers", [])
    if len(fingers) != 4:
        raise ValidationError("fingers", "exactly 4 fingers required")
    bases, angles, paths = [], [], []
    for i, f in enumerate(fingers):
        where = f"fingers[{i}]"
        base = _transform(f.get("base", {}), f"{where}.base")
        samples = np.asarray(f.get("path", []), dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 4 or len(samples) < 2:
            raise ValidationError(f"{where}.path", "need >= 2 rows of [angle, x, y, z]")
        a, p = samples[:, 0], samples[:, 1:]
        if np.any(np.diff(a) <= 0):
            raise ValidationError(f"{where}.path", "sample angles must be strictly increasing")
        lo, hi = limits[i]
        if a[0] < lo - 1e-12 or a[-1] > hi + 1e-12:
            raise ValidationError(f"{where}.path", "sample angles outside joint limits")
        a, p = _resample(a, p, N_SAMPLES)
        bases.append(base)
        angles.append(a)
        paths.append(tf.apply(base, p))
    if len({len(a) for a in angles}) != 1:
        raise ValidationError("fingers", "all finger paths need the same sample count")

    thumb = doc.get("thumb", {})
    plane = thumb.get("plane", {})
    origin = _vec(plane, "point")
    normal = _vec(plane, "normal")
    u_axis = _vec(plane, "u_axis")
    normal = normal / np.linalg.norm(normal)
    u_axis = u_axis - np.dot(u_axis, normal) * normal
    if np.linalg.norm(u_axis) < 1e-9:
        raise ValidationError("thumb.plane.u_axis", "parallel to the plane normal")
    u_axis /= np.linalg.norm(u_axis)
    v_axis = np.cross(normal, u_axis)

    poly3 = np.asarray(thumb.get("polygon", []), dtype=float)
    if poly3.ndim != 2 or poly3.shape[1] != 3 or len(poly3) < 3:
        raise ValidationError("thumb.polygon", "need >= 3 hand-frame vertices")
    off_plane = np.abs((poly3 - origin) @ normal)
    if off_plane.max() > 1e-6:
        raise ValidationError("thumb.polygon", f"not planar (max offset {off_plane.max():.2e} m)")
    polygon = np.stack([(poly3 - origin) @ u_axis, (poly3 - origin) @ v_axis], axis=1)

    jm = thumb.get("joint_map", {})
    t1 = np.asarray(jm.get("theta1", []), dtype=float)
    t2 = np.asarray(jm.get("theta2", []), dtype=float)
    grid = np.asarray(jm.get("grid", []), dtype=float)
    if t1.ndim != 1 or t2.ndim != 1 or len(t1) < 2 or len(t2) < 2:
        raise ValidationError("thumb.joint_map", "theta1/theta2 need >= 2 values")
    if np.any(np.diff(t1) <= 0) or np.any(np.diff(t2) <= 0):
        raise ValidationError("thumb.joint_map", "theta values must be strictly increasing")
    if grid.shape != (len(t1), len(t2), 2):
        raise ValidationError("thumb.joint_map.grid", "shape must be (len(theta1), len(theta2), 2)")
    for k, t in ((4, t1), (5, t2)):
        if t[0] < limits[k, 0] - 1e-12 or t[-1] > limits[k, 1] + 1e-12:
            raise ValidationError("thumb.joint_map", "grid exceeds thumb joint limits")

    pinch = np.asarray(doc.get("pinch_axis", []), dtype=float)
    if pinch.shape != (2, 3):
        raise ValidationError("pinch_axis", "need two 3-D points")
    if np.linalg.norm(pinch[1] - pinch[0]) <= 0:
        raise ValidationError("pinch_axis", "zero length")

    return HandConfig(np.array(bases), np.array(angles), np.array(paths), origin, normal,
                      u_axis, v_axis, polygon, t1, t2, grid, limits, pinch,
                      str(doc.get("name", "hand")))


def default_hand_config() -> HandConfig:
    with resources.files("voicegrasp.data").joinpath("hand_default.yaml").open() as fh:
        return load_hand_config(yaml.safe_load(fh))


# --- posing and intersection -------------------------------------------------

def place_hand(config: HandConfig, pose) -> PosedHand:
    """Rigidly move the hand workspace; ``pose`` is a 6-vector or a 4x4 transform."""
    T = np.asarray(pose, dtype=float)
    if T.shape != (4, 4):
        T = tf.pose_to_matrix(T)
    R = T[:3, :3]
    return PosedHand(config, T, tf.apply(T, config.finger_paths),
                     tf.apply(T, config.thumb_origin), R @ config.thumb_normal,
                     R @ config.thumb_u, R @ config.thumb_v, tf.apply(T, config.pinch_axis))


def points_in_polygon(pts, poly):
    """Even-odd rule; pts (N, 2), poly (P, 2)."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (np.count_nonzero(crosses & (x < xint), axis=1) % 2) == 1


def segment_distance(pts, a, b):
    d = b - a
    t = np.clip((pts - a) @ d / np.dot(d, d), 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * d), axis=1)


def intersect_object(posed: PosedHand, cloud: PointCloud, tol: float = DEFAULT_TOL,
                     tree: cKDTree | None = None) -> IntersectionSet:
    """Workspace/object intersection: one contact per finger plus the thumb curve."""
    if cloud.normals is None:
        raise ValidationError("cloud", "normals required for intersection")
    tree = tree if tree is not None else cKDTree(cloud.points)
    cfg = posed.config
    n_f, n_s, _ = posed.finger_paths.shape
    dist, idx = tree.query(posed.finger_paths.reshape(-1, 3))
    dist, idx = dist.reshape(n_f, n_s), idx.reshape(n_f, n_s)
    contacts = []
    for f in range(n_f):
        hits = np.nonzero(dist[f] <= tol)[0]
        if len(hits):
            j = int(hits[0])
            k = idx[f, j]
            contacts.append(FingerContact(cloud.points[k].copy(), -cloud.normals[k],
                                          f, float(cfg.finger_angles[f, j]), j))

    rel = cloud.points - posed.thumb_origin
    near = np.nonzero(np.abs(rel @ posed.thumb_normal) <= tol)[0]
    uv = np.stack([rel[near] @ posed.thumb_u, rel[near] @ posed.thumb_v], axis=1)
    inside = points_in_polygon(uv, cfg.thumb_polygon) if len(near) else np.zeros(0, bool)
    near, uv = near[inside], uv[inside]
    order = np.lexsort((uv[:, 1], uv[:, 0])) if len(near) else np.zeros(0, int)
    near, uv = near[order], uv[order]
    tpts = cloud.points[near]
    result = IntersectionSet(
        tuple(contacts), tpts, -cloud.normals[near], uv,
        segment_distance(tpts, *posed.pinch_axis) if len(near) else np.zeros(0))
    if result.is_empty:
        raise NoIntersection("hand workspace does not reach the object")
    return result


# --- hand kinematics -----------------------------------------------------------

def thumb_forward(config: HandConfig, theta1, theta2):
    """Bilinear interpolation of the thumb grid -> plane coordinates."""
    t1, t2, g = config.thumb_theta1, config.thumb_theta2, config.thumb_grid
    i = int(np.clip(np.searchsorted(t1, theta1, side="right") - 1, 0, len(t1) - 2))
    j = int(np.clip(np.searchsorted(t2, theta2, side="right") - 1, 0, len(t2) - 2))
    s = (theta1 - t1[i]) / (t1[i + 1] - t1[i])
    t = (theta2 - t2[j]) / (t2[j + 1] - t2[j])
    return ((1 - s) * (1 - t) * g[i, j] + s * (1 - t) * g[i + 1, j]
            + (1 - s) * t * g[i, j + 1] + s * t * g[i + 1, j + 1])


def thumb_inverse(config: HandConfig, uv, tol=1e-9):
    """Invert the thumb grid map at plane point ``uv``; raises OutOfRange outside it."""
    uv = np.asarray(uv, dtype=float)
    t1, t2, g = config.thumb_theta1, config.thumb_theta2, config.thumb_grid
    lo = np.minimum(np.minimum(g[:-1, :-1], g[1:, :-1]), np.minimum(g[:-1, 1:], g[1:, 1:]))
    hi = np.maximum(np.maximum(g[:-1, :-1], g[1:, :-1]), np.maximum(g[:-1, 1:], g[1:, 1:]))
    pad = 1e-9
    cand = np.argwhere(np.all((lo - pad <= uv) & (uv <= hi + pad), axis=-1))
    for i, j in cand:
        g00, g10, g01, g11 = g[i, j], g[i + 1, j], g[i, j + 1], g[i + 1, j + 1]
        st = np.array([0.5, 0.5])
        for _ in range(30):
            s, t = st
            F = (1 - s) * (1 - t) * g00 + s * (1 - t) * g10 + (1 - s) * t * g01 + s * t * g11 - uv
            J = np.column_stack([(1 - t) * (g10 - g00) + t * (g11 - g01),
                                 (1 - s) * (g01 - g00) + s * (g11 - g10)])
            try:
                step = np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                break
            st = st - step
            if np.linalg.norm(step) < 1e-13:
                break
        s, t = st
        F = (1 - s) * (1 - t) * g00 + s * (1 - t) * g10 + (1 - s) * t * g01 + s * t * g11 - uv
        if -1e-9 <= s <= 1 + 1e-9 and -1e-9 <= t <= 1 + 1e-9 and np.linalg.norm(F) < tol + 1e-12:
            s, t = np.clip(st, 0.0, 1.0)
            return (float(t1[i] + s * (t1[i + 1] - t1[i])), float(t2[j] + t * (t2[j + 1] - t2[j])))
    raise OutOfRange(f"thumb target {uv} outside the thumb joint map")


def finger_ik(config: HandConfig, contacts: IntersectionSet) -> np.ndarray:
    """6 hand joints: matched sample angle per contacted finger, thumb by grid inversion."""
    if contacts.is_empty:
        raise NoIntersection("no contacts to solve hand IK for")
    h = config.open_joints
    for c in contacts.finger_contacts:
        h[c.finger] = c.angle
    ti = contacts.thumb_index()
    if ti is not None:
        h[4], h[5] = thumb_inverse(config, contacts.thumb_uv[ti])
    return h


def finger_fk(config: HandConfig, h) -> np.ndarray:
    """Fingertip positions (4 fingers then thumb) in the hand frame."""
    h = np.asarray(h, dtype=float)
    lim = config.joint_limits
    if h.shape != (6,) or np.any(h < lim[:, 0] - 1e-12) or np.any(h > lim[:, 1] + 1e-12):
        raise JointLimit(f"hand joints {h} outside limits")
    tips = []
    for f in range(4):
        a, p = config.finger_angles[f], config.finger_paths[f]
        tips.append([np.interp(h[f], a, p[:, k]) for k in range(3)])
    tips.append(config.plane_point(thumb_forward(config, h[4], h[5])))
    return np.array(tips)
