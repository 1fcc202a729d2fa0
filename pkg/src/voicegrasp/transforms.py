"""Rigid-transform helpers shared by the hand, candidate and arm modules."""

import numpy as np
from scipy.spatial.transform import Rotation


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    return a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))


def rigid(R=None, t=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def invert(T):
    R, t = T[:3, :3], T[:3, 3]
    return rigid(R.T, -R.T @ t)


def apply(T, points):
    points = np.asarray(points, dtype=float)
    return points @ T[:3, :3].T + T[:3, 3]


def pose_to_matrix(m):
    """6-vector (x, y, z, intrinsic XYZ Euler) -> 4x4 homogeneous transform."""
    m = np.asarray(m, dtype=float)
    return rigid(Rotation.from_euler("XYZ", m[3:6]).as_matrix(), m[:3])


def matrix_to_pose(T):
    euler = Rotation.from_matrix(T[:3, :3]).as_euler("XYZ")
    return np.concatenate([T[:3, 3], wrap_angle(euler)])


def axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()


def rotation_between(a, b):
    """Minimal-angle rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    axis = np.cross(a, b)
    s, c = np.linalg.norm(axis), float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antiparallel: half turn about the first coordinate axis orthogonal to a
        helper = np.eye(3)[np.argmin(np.abs(a))]
        perp = np.cross(a, helper)
        return axis_angle(perp, np.pi)
    return axis_angle(axis, np.arctan2(s, c))


def rotation_angle(R):
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))
