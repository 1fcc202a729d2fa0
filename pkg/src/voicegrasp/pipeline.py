"""End-to-end planning run: instruction -> features -> candidates -> refinement -> motion."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import dgcg, dgr, motion
from . import transforms as tf
from .config import PipelineConfig
from .errors import (EmptyTranscript, IoError, NoForceClosureCandidate, NoIntersection,
                     ValidationError)
from .features import ObjectFeatures, extract_features
from .hand import (HandConfig, default_hand_config, intersect_object, load_hand_config,
                   place_hand)
from .rere import (EnrichmentWeights, HttpProvider, MockProvider, Transcript, assess_alignment,
                   compose_enriched, energy_gate, extract_visual_features, http_transcriber,
                   load_prompt_template, read_wav, transcribe)
from .scene import PointCloud, SceneFrame, estimate_normals, load_scene, save_cloud

log = logging.getLogger(__name__)

SCHEMA_ID = "voicegrasp.plan/1"


def _r(x, nd=9):
    """Round floats for stable, readable output."""
    return np.round(np.asarray(x, dtype=float), nd).tolist()


@dataclass
class GraspPlanResult:
    instruction: dict
    features: dict
    material: str
    mu: float
    affordance: dict
    nominal_pose: list
    counts: dict
    top3: list
    best: dict
    metric: str
    seed: int
    timing_ms: dict = field(default_factory=dict)

    def document(self, include_timing=False):
        doc = {
            "schema": SCHEMA_ID,
            "seed": self.seed,
            "instruction": self.instruction,
            "features": self.features,
            "material": self.material,
            "mu": self.mu,
            "affordance": self.affordance,
            "nominal_pose": self.nominal_pose,
            "candidates": self.counts,
            "metric": self.metric,
            "top3": self.top3,
            "best": self.best,
        }
        if include_timing:
            doc["timing_ms"] = {k: round(v, 3) for k, v in self.timing_ms.items()}
        return doc

    def to_json(self, include_timing=False):
        doc = self.document(include_timing)
        validate_result(doc)
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def result_schema():
    with resources.files("voicegrasp.data").joinpath("result.schema.json").open() as fh:
        return json.load(fh)


def validate_result(doc):
    try:
        jsonschema.validate(doc, result_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError("result", exc.message) from None


class _Timer:
    def __init__(self):
        self.ms = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.ms[name] = self.ms.get(name, 0.0) + 1000.0 * (time.perf_counter() - t0)


@dataclass
class Resources:
    scene: SceneFrame
    hand: HandConfig
    arm: motion.ArmModel
    table: dgr.FrictionTable
    provider: object | None
    transcriber: object | None
    template: str


def load_resources(cfg: PipelineConfig) -> Resources:
    scene = load_scene(cfg.scene_spec(), cfg.base_dir)
    hp = cfg.path("hand")
    hand = default_hand_config() if hp is None else load_hand_config(hp)
    arm = motion.load_arm_model(cfg.path("arm"))
    table = dgr.FrictionTable.load(cfg.path("friction"))
    prov = cfg["providers"]
    provider = transcriber = None
    if prov["kind"] == "mock":
        provider = transcriber = MockProvider.load(cfg.base_dir / prov["fixture"])
    elif prov["kind"] == "http":
        provider = HttpProvider(timeout=prov["timeout"])
        transcriber = http_transcriber(prov["timeout"])
    template = load_prompt_template(cfg.path("prompt_template"))
    return Resources(scene, hand, arm, table, provider, transcriber, template)


def run_instruction(cfg: PipelineConfig, res: Resources, text=None, audio_path=None) -> dict:
    rc = cfg["rere"]
    if audio_path is not None:
        if res.transcriber is None:
            raise ValidationError("providers.kind", "audio input needs a transcription provider")
        audio = read_wav(audio_path)
        a = rc["audio"]
        segments = energy_gate(audio, a["window_ms"], a["threshold"], a["hangover_ms"])
        if not segments:
            raise EmptyTranscript(f"no speech above the energy threshold in {audio_path}")
        t_orig = transcribe(segments[0], res.transcriber)
    else:
        t_orig = Transcript(str(text or ""), 1.0)
    out = {"transcript": t_orig.text, "confidence": t_orig.confidence, "enriched": t_orig.text,
           "alignment": None, "included": [], "visual_features": None}
    if not rc["enabled"] or res.provider is None:
        if not t_orig.text.strip():
            raise EmptyTranscript("empty instruction")
        return out
    score, cues = assess_alignment(t_orig, res.scene.rgb, res.provider, rc["gate"])
    feat = extract_visual_features(t_orig, res.scene.rgb, res.provider, res.template, cues)
    enriched = compose_enriched(t_orig, feat, EnrichmentWeights.from_mapping(rc["weights"]),
                                score, rc["gate"])
    out.update(enriched=enriched.text, alignment=score, included=list(enriched.included),
               visual_features={"category": feat.category, "color": feat.color,
                                "shape": feat.shape, "material": feat.material,
                                "position": feat.position, "context_cues": list(feat.context_cues)})
    return out


def mask_crop(scene: SceneFrame):
    ys, xs = np.nonzero(scene.mask.bits)
    if len(xs) == 0:
        return scene.rgb
    return scene.rgb[ys.min(): ys.max() + 1, xs.min(): xs.max() + 1]


def choose_material(cfg: PipelineConfig, res: Resources):
    fixed = cfg["dgr"]["material"]
    if fixed:
        return res.table.match(fixed)
    if res.provider is None:
        return "default"
    return dgr.classify_material(mask_crop(res.scene), res.provider, res.table)


def feature_summary(of: ObjectFeatures) -> dict:
    return {
        "cstar_pixel": [int(v) for v in of.cstar.pixel],
        "cstar": _r(of.cstar.point),
        "tangent2d": _r(of.tangent),
        "pca_axis": _r(of.axes.first),
        "pca_degenerate": bool(of.axes.degenerate),
        "direction": _r(of.feature.direction),
        "mask_pixels": int(of.mask.bits.sum()),
        "points": len(of.cloud),
    }


def pinch_deviation_deg(hand: HandConfig, pose_matrix, feature, alignment):
    d = pose_matrix[:3, :3] @ hand.pinch_direction
    target = dgcg.alignment_target(feature.direction, alignment)
    return float(np.degrees(np.arccos(np.clip(np.dot(d, target), -1.0, 1.0))))


def plan(cfg: PipelineConfig, text=None, audio_path=None, res: Resources | None = None):
    """Run every stage; returns (GraspPlanResult, context dict for exports)."""
    timer = _Timer()
    with timer.stage("load"):
        res = res or load_resources(cfg)
    with timer.stage("instruction"):
        instruction = run_instruction(cfg, res, text, audio_path)
    with timer.stage("features"):
        of = extract_features(res.scene, cfg["features"]["tangent_radius_px"])
        cloud = estimate_normals(of.cloud, cfg["features"]["normal_k"])
    g, r, mcfg = cfg["dgcg"], cfg["dgr"], cfg["motion"]
    with timer.stage("material"):
        material = choose_material(cfg, res)
        mu = res.table.mu(material)
    with timer.stage("candidates"):
        nominal = dgcg.nominal_pose(of.feature, res.hand, g["tilt"], g["standoff"],
                                    g["pinch_alignment"])
        try:
            nominal_cand = dgcg.candidate_from_pose(nominal, res.hand, cloud, g["tol"])
            k_o = dgcg.affordance(nominal_cand.contacts, of.feature, mu)
        except NoIntersection:
            log.warning("nominal pose misses the object; using the widest sampling spread")
            k_o = dgcg.AffordanceScore(dgcg.K_MIN, 0.0)
        samples = dgcg.sample_candidates(nominal, k_o, g["n"], g["seed"], g["sigma_p"],
                                         g["sigma_r"])
        candidates = dgcg.assemble(samples, res.hand, cloud, of.feature, mu, g["tol"])
    with timer.stage("refinement"):
        centroid = cloud.points.mean(axis=0)
        scored = dgr.score_candidates(candidates, mu, centroid, r["m"], r["metric"])
        if not scored:
            raise NoForceClosureCandidate(
                f"none of {len(candidates)} candidates is in force closure")
        top = dgr.top_k(scored, 3)
    with timer.stage("motion"):
        arm = res.arm
        s = mcfg["stomp"]
        params = motion.StompParams(s["iterations"], s["rollouts"], s["sigma"], s["clearance"],
                                    seed=g["seed"])
        start = arm.home if mcfg["start"] == "home" else np.asarray(mcfg["start"], float)
        cloud_base = tf.apply(tf.invert(arm.base_pose), cloud.points)
        best, plans = motion.select_best(top, arm, start, cloud_base, mcfg["waypoints"], params)

    top3 = []
    for rank, rg in enumerate(top):
        c = rg.candidate
        top3.append({"rank": rank, "sample_index": c.sample_index, "q": round(rg.quality.q, 12),
                     "finger_contacts": c.contacts.n_fingers,
                     "thumb_points": int(len(c.contacts.thumb_points)),
                     "action": _r(c.action)})
    bc = best.candidate
    best_doc = {
        "rank": best.index, "sample_index": bc.sample_index, "q": round(best.quality, 12),
        "action": _r(bc.action), "motion_cost": round(best.cost, 9),
        "arm_joints": _r(best.joints), "waypoints": len(best.trajectory),
        "pinch_axis_deviation_deg": round(pinch_deviation_deg(
            res.hand, bc.pose.matrix, of.feature, g["pinch_alignment"]), 6),
        "motion_costs": {str(p.index): round(p.cost, 9) for p in plans},
    }
    result = GraspPlanResult(
        instruction=instruction, features=feature_summary(of), material=material, mu=mu,
        affordance={"k_o": round(k_o.k_o, 9), "f_w": round(k_o.f_w, 9)},
        nominal_pose=_r(nominal.m),
        counts={"sampled": len(samples), "assembled": len(candidates), "force_closure": len(scored)},
        top3=top3, best=best_doc, metric=r["metric"], seed=g["seed"], timing_ms=timer.ms)
    context = {"resources": res, "features": of, "cloud": cloud, "best": best, "top": top,
               "centroid": centroid, "mu": mu}
    return result, context


def export_viz(cfg: PipelineConfig, result_doc: dict, out_dir, res: Resources | None = None):
    """Write geometry for external viewers; returns the list of written paths."""
    if not result_doc.get("top3"):
        log.warning("result has no ranked grasps; nothing to export")
        return []
    res = res or load_resources(cfg)
    of = extract_features(res.scene, cfg["features"]["tangent_radius_px"])
    cloud = estimate_normals(of.cloud, cfg["features"]["normal_k"])
    action = np.asarray(result_doc["best"]["action"], dtype=float)
    posed = place_hand(res.hand, action[:6])
    contacts = intersect_object(posed, cloud, cfg["dgcg"]["tol"])
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def cloud_file(name, pts, normals=None):
            p = out / name
            save_cloud(PointCloud(np.asarray(pts, float).reshape(-1, 3), normals), p)
            written.append(p)

        cloud_file("object_cloud.ply", cloud.points, cloud.normals)
        if contacts.n_fingers:
            cloud_file("finger_contacts.ply", [c.point for c in contacts.finger_contacts],
                       np.array([c.normal for c in contacts.finger_contacts]))
        ti = contacts.thumb_index()
        if ti is not None:
            cloud_file("thumb_contact.ply", contacts.thumb_points[ti:ti + 1],
                       contacts.thumb_normals[ti:ti + 1])
        for f, path in enumerate(posed.finger_paths):
            cloud_file(f"finger_{f}_path.ply", path)
        cloud_file("pinch_axis.ply", posed.pinch_axis)
        mu = float(result_doc["mu"])
        pts, nrm = contacts.contact_points()
        W = dgr.wrench_matrix([dgr.Contact(p, n, mu) for p, n in zip(pts, nrm)],
                              cloud.points.mean(axis=0), cfg["dgr"]["m"])
        p = out / "gws_vertices.csv"
        lines = ["fx,fy,fz,tx,ty,tz,force_norm,torque_norm"]
        lines += [",".join(f"{v:.9f}" for v in (*w, np.linalg.norm(w[:3]), np.linalg.norm(w[3:])))
                  for w in W]
        p.write_text("\n".join(lines) + "\n")
        written.append(p)
    except OSError as exc:
        raise IoError(f"cannot write export to {out}: {exc}") from None
    return written
