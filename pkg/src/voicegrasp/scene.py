"""RGB-D scene ingestion: back-projection, normals and ASCII PLY clouds.

Camera frame convention everywhere: x right, y down, z forward (meters).
Pixels are addressed as (u, v) = (column, row).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from PIL import Image
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptySelection, MissingField, ParseError, ValidationError

DEFAULT_DEPTH_SCALE = 0.001


def _frozen(a, dtype=float):
    if a is None:
        return None
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("intrinsics", "focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("intrinsics", "principal point outside the image")

    @classmethod
    def from_mapping(cls, d):
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       int(d["width"]), int(d["height"]))
        except KeyError as exc:
            raise ValidationError("intrinsics", f"missing key {exc.args[0]}") from None

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_mapping(yaml.safe_load(fh))

    def project(self, points):
        """Camera-frame points (N, 3) or one point (3,) -> real-valued (u, v), shape (N, 2)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.stack([self.fx * p[:, 0] / p[:, 2] + self.cx,
                         self.fy * p[:, 1] / p[:, 2] + self.cy], axis=1)


@dataclass(frozen=True)
class DepthImage:
    values: np.ndarray  # (H, W) meters, 0 where invalid

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v[~np.isfinite(v) | (v <= 0)] = 0.0
        object.__setattr__(self, "values", _frozen(v))

    @property
    def valid(self):
        return self.values > 0

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @classmethod
    def from_raw(cls, raw, scale=DEFAULT_DEPTH_SCALE):
        return cls(np.asarray(raw, dtype=float) * scale)


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(self.bits, dtype=bool))

    @property
    def shape(self):
        return self.bits.shape

    def pixels(self):
        """Set pixels as an (N, 2) integer array of (x, y)."""
        ys, xs = np.nonzero(self.bits)
        return np.stack([xs, ys], axis=1)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    pixel_index: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None  # per-point DegenerateNeighborhood flag

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts) < 1:
            raise EmptySelection("point cloud has no points")
        object.__setattr__(self, "points", _frozen(pts))
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if n.shape != pts.shape:
                raise ValidationError("normals", "shape does not match points")
            if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > 1e-6):
                raise ValidationError("normals", "normals must be unit length")
            object.__setattr__(self, "normals", _frozen(n))
        object.__setattr__(self, "pixel_index", _frozen(self.pixel_index, dtype=int))
        object.__setattr__(self, "degenerate", _frozen(self.degenerate, dtype=bool))

    def __len__(self):
        return len(self.points)

    def transformed(self, T):
        pts = self.points @ T[:3, :3].T + T[:3, 3]
        nrm = None if self.normals is None else self.normals @ T[:3, :3].T
        return PointCloud(pts, nrm, self.pixel_index, self.degenerate)

    def subset(self, idx):
        take = lambda a: None if a is None else a[idx]
        return PointCloud(self.points[idx], take(self.normals), take(self.pixel_index),
                          take(self.degenerate))


@dataclass(frozen=True)
class SceneFrame:
    rgb: np.ndarray
    depth: DepthImage
    mask: BinaryMask
    intrinsics: CameraIntrinsics
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        rgb = _frozen(self.rgb, dtype=np.uint8)
        object.__setattr__(self, "rgb", rgb)
        shape = (self.intrinsics.height, self.intrinsics.width)
        if rgb.shape[:2] != shape or self.depth.values.shape != shape or self.mask.shape != shape:
            raise ValidationError("scene", "rgb, depth, mask and intrinsics disagree on image size")


def back_project(depth: DepthImage, intr: CameraIntrinsics, mask: BinaryMask | None = None) -> PointCloud:
    """Pinhole back-projection of the valid (and masked) pixels."""
    sel = depth.valid
    if mask is not None:
        if mask.shape != depth.values.shape:
            raise ValidationError("mask", "mask and depth dimensions differ")
        sel = sel & mask.bits
    v, u = np.nonzero(sel)
    if len(u) == 0:
        raise EmptySelection("no valid depth inside the selection")
    z = depth.values[v, u]
    pts = np.stack([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z], axis=1)
    return PointCloud(pts, pixel_index=np.stack([u, v], axis=1))


def _fallback_normal(basis):
    # deterministic pick inside a degenerate 2-D eigenspace: project x, y, z axes in turn
    for axis in np.eye(3):
        proj = basis @ (basis.T @ axis)
        n = np.linalg.norm(proj)
        if n > 1e-6:
            return proj / n
    return basis[:, 0]


def estimate_normals(cloud: PointCloud, k: int = 20) -> PointCloud:
    """k-NN covariance normals, oriented toward the camera origin.

    Neighborhoods include the query point itself. Points whose two smallest
    covariance eigenvalues coincide within 1e-9 are flagged in
    ``PointCloud.degenerate``.
    """
    if k < 3:
        raise ValidationError("k", "need at least 3 neighbors")
    pts = cloud.points
    if len(pts) < k:
        raise ValidationError("k", f"cloud has {len(pts)} points, fewer than k={k}")
    _, idx = cKDTree(pts).query(pts, k=k)
    nb = pts[idx]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()
    degenerate = (evals[:, 1] - evals[:, 0]) <= 1e-9
    for i in np.nonzero(degenerate)[0]:
        normals[i] = _fallback_normal(evecs[i][:, :2])
    flip = np.einsum("ij,ij->i", normals, -pts) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals, cloud.pixel_index, degenerate)


# --- files -----------------------------------------------------------------

def save_cloud(cloud: PointCloud, path) -> None:
    has_n = cloud.normals is not None
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z"]
    if has_n:
        lines += ["property float nx", "property float ny", "property float nz"]
    lines.append("end_header")
    data = np.hstack([cloud.points, cloud.normals]) if has_n else cloud.points
    lines += [" ".join(f"{v:.9g}" for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def load_cloud(path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", line=1)
    elements = []  # [name, count, [props]]
    i = 1
    while True:
        if i >= len(lines):
            raise ParseError("header has no end_header", line=i)
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise ParseError("only ascii format is supported", line=i)
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError("malformed element line", line=i)
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements or len(tok) < 3:
                raise ParseError("property outside an element", line=i)
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", line=i)
    vertex = None
    for name, count, props in elements:
        if name == "vertex":
            vertex = (i, count, props)
            break
        i += count
    if vertex is None:
        raise MissingField("no vertex element")
    start, count, props = vertex
    for f in ("x", "y", "z"):
        if f not in props:
            raise MissingField(f"vertex property {f!r} missing")
    if count == 0:
        raise EmptySelection("cloud file has 0 vertices")
    rows = []
    for j in range(start, start + count):
        if j >= len(lines):
            raise ParseError("file ends before all vertices were read", line=j + 1)
        try:
            vals = [float(t) for t in lines[j].split()]
        except ValueError:
            raise ParseError("non-numeric vertex value", line=j + 1) from None
        if len(vals) < len(props):
            raise ParseError("vertex row has too few values", line=j + 1)
        rows.append(vals[: len(props)])
    data = np.array(rows)
    col = {p: c for c, p in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    normals = None
    if all(p in col for p in ("nx", "ny", "nz")):
        normals = data[:, [col["nx"], col["ny"], col["nz"]]]
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals)


def load_depth(path, scale=DEFAULT_DEPTH_SCALE) -> DepthImage:
    raw = np.asarray(Image.open(path))
    if raw.ndim != 2:
        raise ParseError(f"{path}: depth raster must be single channel")
    return DepthImage.from_raw(raw.astype(np.uint16), scale)


def save_depth(depth: DepthImage, path, scale=DEFAULT_DEPTH_SCALE) -> None:
    raw = np.clip(np.round(depth.values / scale), 0, 65535).astype(np.uint16)
    Image.fromarray(raw).save(path)


def load_mask(path) -> BinaryMask:
    raw = np.asarray(Image.open(path).convert("L"))
    return BinaryMask(raw != 0)


def load_rgb(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def load_scene(spec, base_dir=None) -> SceneFrame:
    """Load a scene from a mapping with keys rgb, depth, mask, intrinsics (paths)."""
    base = Path(base_dir or ".")
    try:
        paths = {k: base / spec[k] for k in ("rgb", "depth", "mask", "intrinsics")}
    except KeyError as exc:
        raise ConfigError(f"scene: missing key {exc.args[0]}") from None
    for k, p in paths.items():
        if not p.exists():
            raise ConfigError(f"scene.{k}: file not found: {p}")
    intr = CameraIntrinsics.load(paths["intrinsics"])
    depth = load_depth(paths["depth"], float(spec.get("depth_scale", DEFAULT_DEPTH_SCALE)))
    return SceneFrame(load_rgb(paths["rgb"]), depth, load_mask(paths["mask"]), intr,
                      source={k: str(v) for k, v in paths.items()})
