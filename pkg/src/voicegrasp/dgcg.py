"""Grasp candidate generation: nominal pose, affordance, Gaussian sampling, assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import transforms as tf
from .errors import NoCandidates, NoContacts, NoIntersection, OutOfRange, ValidationError
from .features import FeatureVector
from .hand import (DEFAULT_TOL, HandConfig, IntersectionSet, finger_ik, intersect_object,
                   place_hand)
from .scene import PointCloud

log = logging.getLogger(__name__)

PARALLEL, PERPENDICULAR = "parallel", "perpendicular"
SIGMA_P = 0.01
SIGMA_R = 0.1
K_MIN = 0.05
D_MAX = 0.15  # contacts farther than this from the feature origin earn no proximity credit
LOGISTIC_SLOPE = 8.0
WEIGHTS = (1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class GraspPose:
    m: np.ndarray  # (x, y, z, rx, ry, rz), intrinsic XYZ Euler, camera frame

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (6,) or not np.all(np.isfinite(m)):
            raise ValidationError("pose", "expected 6 finite values")
        m[3:] = tf.wrap_angle(m[3:])
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def matrix(self):
        return tf.pose_to_matrix(self.m)

    @classmethod
    def from_matrix(cls, T):
        return cls(tf.matrix_to_pose(T))


@dataclass(frozen=True)
class AffordanceScore:
    k_o: float
    f_w: float = float("nan")

    def __post_init__(self):
        if not 0 < self.k_o <= 1:
            raise ValidationError("k_o", "affordance must lie in (0, 1]")


@dataclass(frozen=True)
class GraspCandidate:
    pose: GraspPose
    joints: np.ndarray
    contacts: IntersectionSet
    sample_index: int = 0

    @property
    def action(self):
        return np.concatenate([self.pose.m, self.joints])


def alignment_target(direction, alignment=PARALLEL):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if alignment == PARALLEL:
        return d
    if alignment != PERPENDICULAR:
        raise ValidationError("pinch_alignment", f"unknown alignment {alignment!r}")
    # across the object within the image plane (optical axis = camera z)
    p = np.cross(d, [0.0, 0.0, 1.0])
    if np.linalg.norm(p) < 1e-9:
        p = np.cross(d, [1.0, 0.0, 0.0])
    return p / np.linalg.norm(p)


def nominal_pose(feature: FeatureVector, config: HandConfig, tilt=0.0, standoff=0.0,
                 alignment=PARALLEL) -> GraspPose:
    """Pinch axis along the (possibly rotated) feature direction, midpoint at C*.

    ``standoff`` backs the hand off along its approach normal (hand -z).
    """
    target = alignment_target(feature.direction, alignment)
    R = tf.axis_angle(target, tilt) @ tf.rotation_between(config.pinch_direction, target)
    origin = feature.point_at()
    t = origin - R @ config.pinch_midpoint + standoff * (R @ np.array([0.0, 0.0, -1.0]))
    return GraspPose.from_matrix(tf.rigid(R, t))


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def opposition(contacts: IntersectionSet, mu):
    """Best thumb point: number of finger contacts it opposes inside both friction cones."""
    if len(contacts.thumb_points) == 0 or contacts.n_fingers == 0:
        return 0
    cos_half = np.cos(np.arctan(mu))
    best = 0
    for pt, nt in zip(contacts.thumb_points, contacts.thumb_normals):
        count = 0
        for c in contacts.finger_contacts:
            d = _unit(pt - c.point)  # finger -> thumb
            if np.linalg.norm(d) == 0:
                continue
            if np.dot(c.normal, d) >= cos_half and np.dot(nt, -d) >= cos_half:
                count += 1
        best = max(best, count)
    return best


def logistic(x):
    return 1.0 / (1.0 + np.exp(-LOGISTIC_SLOPE * (x - 0.5)))


def affordance(contacts: IntersectionSet | None, feature: FeatureVector, mu) -> AffordanceScore:
    """K_o = clamp(logistic(f_w)); f_w averages coverage, opposition and proximity (each /4)."""
    if contacts is None or contacts.is_empty:
        raise NoContacts("affordance needs at least one contact")
    origin = feature.point_at()
    coverage = contacts.n_fingers / 4
    opp = opposition(contacts, mu) / 4
    near = sum(1.0 - min(np.linalg.norm(c.point - origin) / D_MAX, 1.0)
               for c in contacts.finger_contacts) / 4
    w1, w2, w3 = WEIGHTS
    f_w = w1 * coverage + w2 * opp + w3 * near
    return AffordanceScore(float(np.clip(logistic(f_w), K_MIN, 1.0)), float(f_w))


def sample_covariance(k_o, sigma_p=SIGMA_P, sigma_r=SIGMA_R):
    k = float(np.clip(k_o.k_o if isinstance(k_o, AffordanceScore) else k_o, K_MIN, 1.0))
    return np.array([sigma_p ** 2] * 3 + [sigma_r ** 2] * 3) / k


def sample_candidates(nominal: GraspPose, k_o, n: int, seed: int,
                      sigma_p=SIGMA_P, sigma_r=SIGMA_R) -> list[GraspPose]:
    """n draws from N(nominal, diag/K_o); draw i uses its own stream keyed by (seed, i)."""
    if n < 1:
        raise ValidationError("n", "need at least one sample")
    std = np.sqrt(sample_covariance(k_o, sigma_p, sigma_r))
    out = []
    for i in range(n):
        z = np.random.default_rng([seed, i]).standard_normal(6)
        out.append(GraspPose(nominal.m + std * z))
    return out


def candidate_from_pose(pose: GraspPose, config: HandConfig, cloud: PointCloud, tol=DEFAULT_TOL,
                        tree=None, index=0) -> GraspCandidate:
    contacts = intersect_object(place_hand(config, pose.matrix), cloud, tol, tree)
    return GraspCandidate(pose, finger_ik(config, contacts), contacts, index)


def assemble(samples, config: HandConfig, cloud: PointCloud, feature: FeatureVector | None = None,
             mu=None, tol=DEFAULT_TOL) -> list[GraspCandidate]:
    """Place, intersect and solve hand IK per sample; unreachable samples are dropped.

    ``feature`` and ``mu`` are accepted for interface symmetry with affordance; the
    assembly itself is purely geometric.
    """
    tree = cKDTree(cloud.points)
    out, dropped = [], 0
    for i, pose in enumerate(samples):
        try:
            out.append(candidate_from_pose(pose, config, cloud, tol, tree, i))
        except (NoIntersection, OutOfRange):
            dropped += 1
    log.debug("assembled %d candidates, dropped %d", len(out), dropped)
    if not out:
        raise NoCandidates(f"all {len(samples)} samples missed the object")
    return out
