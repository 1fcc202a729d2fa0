"""Grasp refinement: friction cones, force closure, grasp wrench space and ranking.

Wrenches are 6-vectors ``[fx, fy, fz, tx, ty, tz]`` with unit-norm forces and
torques divided by a torque scale ``rho`` (default: the largest contact
distance from the object centroid).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import (ConfigError, DegenerateHull, NoForceClosureCandidate, ProviderUnavailable,
                     ValidationError)

log = logging.getLogger(__name__)

DEFAULT_EDGES = 8
ORACLE_EDGES = 64
HULL_TOL = 1e-9
INSCRIBED, ENCLOSING = "inscribed", "enclosing"


@dataclass(frozen=True)
class FrictionTable:
    entries: dict
    default_mu: float = 0.35

    def __post_init__(self):
        for k, mu in list(self.entries.items()) + [("default", self.default_mu)]:
            if not 0 < float(mu) <= 2:
                raise ValidationError(f"friction.{k}", "mu must lie in (0, 2]")

    @classmethod
    def from_mapping(cls, d):
        d = dict(d)
        default = float(d.pop("default", 0.35))
        return cls({str(k).lower(): float(v) for k, v in d.items()}, default)

    @classmethod
    def load(cls, path=None):
        if path is None:
            with resources.files("voicegrasp.data").joinpath("friction.yaml").open() as fh:
                return cls.from_mapping(yaml.safe_load(fh))
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"friction table not found: {p}")
        return cls.from_mapping(yaml.safe_load(p.read_text()))

    def mu(self, material):
        return self.entries.get(material, self.default_mu)

    def match(self, answer):
        """Map a free-text material answer onto a table key (or 'default')."""
        a = " ".join(str(answer).lower().split())
        if a in self.entries:
            return a
        hits = [k for k in sorted(self.entries) if k in a]
        if hits:
            return max(hits, key=len)
        return "default"


class Contact(NamedTuple):
    point: np.ndarray
    normal: np.ndarray  # inward unit normal
    mu: float


def tangent_basis(n, lever=None):
    """Right-handed (t1, t2) spanning the plane orthogonal to ``n``.

    t1 follows the lever arm's tangential component when it has one, so the
    discretised cone turns with the contact under rigid motion; otherwise a
    fixed helper axis is projected instead.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    if lever is not None:
        r = np.asarray(lever, dtype=float)
        tang = r - np.dot(r, n) * n
        if np.linalg.norm(tang) > 1e-6 * max(np.linalg.norm(r), 1e-12):
            t1 = tang / np.linalg.norm(tang)
            return t1, np.cross(n, t1)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def contact_wrenches(c: Contact, centroid, m: int = DEFAULT_EDGES, rho: float = 1.0) -> np.ndarray:
    """Friction-cone edge wrenches of one contact, shape (m, 6); (1, 6) when mu == 0."""
    if m < 3:
        raise ValidationError("m", "need at least 3 cone edges")
    if rho <= 0:
        raise ValidationError("rho", "torque scale must be positive")
    n = np.asarray(c.normal, dtype=float)
    r = np.asarray(c.point, dtype=float) - np.asarray(centroid, dtype=float)
    if c.mu == 0:
        f = n[None, :] / np.linalg.norm(n)
    else:
        t1, t2 = tangent_basis(n, r)
        th = 2.0 * np.pi * np.arange(m) / m
        f = n + c.mu * (np.cos(th)[:, None] * t1 + np.sin(th)[:, None] * t2)
        f /= np.linalg.norm(f, axis=1, keepdims=True)
    return np.hstack([f, np.cross(r, f) / rho])


def torque_scale(contacts, centroid):
    d = max(np.linalg.norm(np.asarray(c.point) - centroid) for c in contacts)
    return d if d > 0 else 1.0


def wrench_matrix(contacts, centroid, m=DEFAULT_EDGES, rho=None):
    centroid = np.asarray(centroid, dtype=float)
    rho = torque_scale(contacts, centroid) if rho is None else rho
    return np.vstack([contact_wrenches(c, centroid, m, rho) for c in contacts])


def affine_dim(points, tol=HULL_TOL):
    if len(points) <= 1:
        return 0
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    return int(np.count_nonzero(s > tol * max(1.0, s[0])))


def wrenches_force_closure(W) -> bool:
    """Origin strictly inside conv(W): full rank and a strictly positive null combination."""
    W = np.asarray(W, dtype=float)
    if len(W) < 7:
        return False
    s = np.linalg.svd(W, compute_uv=False)
    if np.count_nonzero(s > HULL_TOL * s[0]) < 6:
        return False
    n = len(W)
    res = linprog(np.zeros(n), A_eq=W.T, b_eq=np.zeros(6), bounds=[(1.0, None)] * n,
                  method="highs")
    return res.status == 0


def force_closure(contacts, centroid, m=DEFAULT_EDGES, rho=None) -> bool:
    if not contacts:
        raise ValidationError("contacts", "need at least one contact")
    return wrenches_force_closure(wrench_matrix(contacts, centroid, m, rho))


@dataclass(frozen=True)
class GraspWrenchSpace:
    vertices: np.ndarray  # (V, 6) distinct wrenches
    normals: np.ndarray  # (F, 6) outward unit facet normals
    offsets: np.ndarray  # (F,) facet i: normals[i] . x <= offsets[i]
    centroid: np.ndarray  # vertex mean (the hull's own center, kept for reference)

    @property
    def affine_dim(self):
        return 6


def gws_from_wrenches(W) -> GraspWrenchSpace:
    V = np.unique(np.round(np.asarray(W, dtype=float), 12), axis=0)
    dim = affine_dim(V)
    if dim < 6:
        raise DegenerateHull(dim)
    try:
        hull = ConvexHull(V)
    except QhullError:
        hull = ConvexHull(V, qhull_options="QJ")
    normals = hull.equations[:, :6]
    offsets = -hull.equations[:, 6]
    return GraspWrenchSpace(V, normals, offsets, V.mean(axis=0))


def build_gws(contacts, centroid, m=DEFAULT_EDGES, rho=None) -> GraspWrenchSpace:
    """Convex hull of the union of all contact cone-edge wrenches."""
    if not contacts:
        raise ValidationError("contacts", "need at least one contact")
    return gws_from_wrenches(wrench_matrix(contacts, centroid, m, rho))


@dataclass(frozen=True)
class QualityScore:
    force_closure: bool
    q: float
    metric_kind: str = INSCRIBED


def quality(gws: GraspWrenchSpace, kind: str = INSCRIBED) -> QualityScore:
    """Inscribed: largest origin-centred ball inside the hull. Enclosing: smallest containing it."""
    margin = float(gws.offsets.min())  # origin's distance to the nearest facet
    inside = margin > HULL_TOL
    if kind == INSCRIBED:
        return QualityScore(inside, margin if inside else 0.0, INSCRIBED)
    if kind == ENCLOSING:
        return QualityScore(inside, float(np.linalg.norm(gws.vertices, axis=1).max()), ENCLOSING)
    raise ValidationError("metric_kind", f"unknown quality metric {kind!r}")


def grasp_quality(contacts, centroid, m=DEFAULT_EDGES, rho=None, kind=INSCRIBED) -> QualityScore:
    """Force-closure gate followed by the hull metric (q = 0 when the gate fails)."""
    W = wrench_matrix(contacts, centroid, m, rho)
    if not wrenches_force_closure(W):
        return QualityScore(False, 0.0, kind)
    return quality(gws_from_wrenches(W), kind)


def classify_material(crop, provider, table: FrictionTable) -> str:
    if crop is None or np.asarray(crop).size == 0:
        raise ValidationError("crop", "empty image crop")
    try:
        reply = provider.complete({"task": "material", "choices": sorted(table.entries)}, crop)
    except ProviderUnavailable as exc:
        log.warning("material provider unavailable (%s); using default friction", exc)
        return "default"
    return table.match(reply.get("material", ""))


class RankedGrasp(NamedTuple):
    quality: QualityScore
    candidate: object
    index: int


def order_by_quality(qs):
    """Indices sorted by descending q, ties by ascending index."""
    return sorted(range(len(qs)), key=lambda i: (-qs[i], i))


def candidate_contacts(candidate, mu):
    pts, nrm = candidate.contacts.contact_points()
    return [Contact(p, n, mu) for p, n in zip(pts, nrm)]


def score_candidates(candidates, mu, centroid, m=DEFAULT_EDGES, kind=INSCRIBED):
    """Force-closure survivors with their quality, in candidate order."""
    scored = []
    for i, cand in enumerate(candidates):
        W = wrench_matrix(candidate_contacts(cand, mu), centroid, m)
        if not wrenches_force_closure(W):
            continue
        try:
            score = quality(gws_from_wrenches(W), kind)
        except DegenerateHull:
            continue
        scored.append(RankedGrasp(score, cand, i))
    return scored


def top_k(scored, limit=3):
    order = order_by_quality([r.quality.q for r in scored])
    return [scored[i] for i in order[:limit]]


def rank_top3(candidates, table: FrictionTable, material, centroid, m=DEFAULT_EDGES,
              kind=INSCRIBED, limit=3):
    """Force-closure filter then descending quality; returns up to ``limit`` RankedGrasp."""
    scored = score_candidates(candidates, table.mu(material), centroid, m, kind)
    if not scored:
        raise NoForceClosureCandidate(f"none of {len(candidates)} candidates is in force closure")
    return top_k(scored, limit)
