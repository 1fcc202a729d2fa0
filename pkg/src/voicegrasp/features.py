"""Object feature vector: skeleton, characteristic centroid, tangent and PCA axis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (EmptyMask, InsufficientSupport, NoValidDepth, TooFewPoints,
                     ZeroDirection)
from .scene import BinaryMask, PointCloud, SceneFrame, back_project

DEFAULT_TANGENT_RADIUS_PX = 7.0
DEPTH_WINDOW = 5


@dataclass(frozen=True)
class Skeleton:
    pixels: np.ndarray  # (N, 2) int (x, y), sorted by y then x
    shape: tuple

    def as_mask(self) -> BinaryMask:
        bits = np.zeros(self.shape, dtype=bool)
        bits[self.pixels[:, 1], self.pixels[:, 0]] = True
        return BinaryMask(bits)

    def __len__(self):
        return len(self.pixels)


@dataclass(frozen=True)
class CharacteristicCentroid:
    pixel: tuple  # (x, y)
    point: np.ndarray  # camera frame, meters


@dataclass(frozen=True)
class PrincipalAxes:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # rows, orthonormal
    degenerate: bool

    @property
    def first(self):
        return self.eigenvectors[0]


@dataclass(frozen=True)
class FeatureVector:
    origin: np.ndarray
    direction: np.ndarray
    tangent2d: np.ndarray
    pca_z: float
    t_param: float = 0.0

    def point_at(self, t=None):
        t = self.t_param if t is None else t
        return self.origin + t * self.direction


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Keep the largest 8-connected component (lowest label wins size ties)."""
    labels, n = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        raise EmptyMask("mask has no set pixels")
    if n == 1:
        return mask
    sizes = np.bincount(labels.ravel())[1:]
    return BinaryMask(labels == (int(np.argmax(sizes)) + 1))


def _neighbors(img):
    p = np.pad(img, 1).astype(np.uint8)
    c = slice(1, -1)
    up, down, left, right = slice(None, -2), slice(2, None), slice(None, -2), slice(2, None)
    # P2..P9 clockwise starting north
    return [p[up, c], p[up, right], p[c, right], p[down, right],
            p[down, c], p[down, left], p[c, left], p[up, left]]


def _thin_pass(img, first):
    P2, P3, P4, P5, P6, P7, P8, P9 = nb = _neighbors(img)
    B = sum(n.astype(int) for n in nb)
    seq = nb + [P2]
    A = sum(((seq[i] == 0) & (seq[i + 1] == 1)).astype(int) for i in range(8))
    if first:
        c1, c2 = P2 * P4 * P6, P4 * P6 * P8
    else:
        c1, c2 = P2 * P4 * P8, P2 * P6 * P8
    remove = img & (B >= 2) & (B <= 6) & (A == 1) & (c1 == 0) & (c2 == 0)
    return img & ~remove, bool(remove.any())


def skeletonize(mask: BinaryMask) -> Skeleton:
    """Two-subiteration parallel thinning, run to a fixpoint."""
    img = np.array(mask.bits, dtype=bool)
    if not img.any():
        raise EmptyMask("cannot skeletonize an empty mask")
    changed = True
    while changed:
        img, c1 = _thin_pass(img, first=True)
        img, c2 = _thin_pass(img, first=False)
        changed = c1 or c2
    ys, xs = np.nonzero(img)
    return Skeleton(np.stack([xs, ys], axis=1), img.shape)


def pixel_centroid(mask: BinaryMask):
    px = mask.pixels()
    if len(px) == 0:
        raise EmptyMask("mask has no set pixels")
    c = px.mean(axis=0)
    return float(c[0]), float(c[1])


def characteristic_centroid(skel: Skeleton, centroid, scene: SceneFrame) -> CharacteristicCentroid:
    px = skel.pixels
    if len(px) == 0:
        raise EmptyMask("empty skeleton")
    d2 = (px[:, 0] - centroid[0]) ** 2 + (px[:, 1] - centroid[1]) ** 2
    best = px[np.lexsort((px[:, 0], px[:, 1], d2))[0]]
    x, y = int(best[0]), int(best[1])
    h = DEPTH_WINDOW // 2
    depth = scene.depth
    win = depth.values[max(0, y - h): y + h + 1, max(0, x - h): x + h + 1]
    vals = win[win > 0]
    if len(vals) == 0:
        raise NoValidDepth(f"no valid depth around pixel ({x}, {y})")
    z = float(np.median(vals))
    intr = scene.intrinsics
    point = np.array([(x - intr.cx) * z / intr.fx, (y - intr.cy) * z / intr.fy, z])
    return CharacteristicCentroid((x, y), point)


def _canonical_2d(v):
    if v[0] < -1e-12 or (abs(v[0]) <= 1e-12 and v[1] < 0):
        return -v
    return v


def skeleton_tangent(skel: Skeleton, cstar: CharacteristicCentroid,
                     radius_px: float = DEFAULT_TANGENT_RADIUS_PX) -> np.ndarray:
    px = skel.pixels.astype(float)
    c = np.asarray(cstar.pixel, dtype=float)
    local = px[np.linalg.norm(px - c, axis=1) <= radius_px]
    if len(local) < 2:
        raise InsufficientSupport(f"only {len(local)} skeleton pixels within {radius_px} px")
    centered = local - local.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    t = vecs[:, -1]
    return _canonical_2d(t / np.linalg.norm(t))


def principal_axis(cloud) -> PrincipalAxes:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered / len(pts))
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    vecs = evecs[:, order].T.copy()
    for i, v in enumerate(vecs):
        if v[np.argmax(np.abs(v))] < 0:
            vecs[i] = -v
    degenerate = bool(evals[0] - evals[1] <= 1e-9 * evals[0])
    return PrincipalAxes(evals, vecs, degenerate)


def feature_vector(cstar: CharacteristicCentroid, tangent, axes: PrincipalAxes) -> FeatureVector:
    t = np.asarray(tangent, dtype=float)
    v1 = axes.first
    if np.dot(v1[:2], t) < 0:
        v1 = -v1
    raw = np.array([t[0], t[1], v1[2]])
    n = np.linalg.norm(raw)
    if n < 1e-9:
        raise ZeroDirection("tangent and principal axis give a zero direction")
    return FeatureVector(np.asarray(cstar.point, dtype=float), raw / n, t, float(v1[2]))


@dataclass(frozen=True)
class ObjectFeatures:
    mask: BinaryMask
    cloud: PointCloud
    skeleton: Skeleton
    centroid2d: tuple
    cstar: CharacteristicCentroid
    tangent: np.ndarray
    axes: PrincipalAxes
    feature: FeatureVector


def extract_features(scene: SceneFrame, radius_px: float = DEFAULT_TANGENT_RADIUS_PX) -> ObjectFeatures:
    """Full feature chain on the largest component of the scene's target mask."""
    if not scene.mask.bits.any():
        raise EmptyMask("target mask is empty")
    mask = largest_component(scene.mask)
    cloud = back_project(scene.depth, scene.intrinsics, mask)
    skel = skeletonize(mask)
    c2 = pixel_centroid(mask)
    cstar = characteristic_centroid(skel, c2, scene)
    tangent = skeleton_tangent(skel, cstar, radius_px)
    axes = principal_axis(cloud)
    return ObjectFeatures(mask, cloud, skel, c2, cstar, tangent, axes,
                          feature_vector(cstar, tangent, axes))
