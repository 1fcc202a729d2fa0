"""Arm kinematics, damped least-squares IK, trajectory refinement and cost-based selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import transforms as tf
from .errors import ConfigError, JointLimit, NoConvergence, NoFeasibleGrasp, ValidationError

log = logging.getLogger(__name__)

POS_TOL = 1e-4
ORI_TOL = 1e-3
MAX_ITER = 200
LAMBDA_MAX = 1e3
RESTART_SIGMA = 0.3  # rad, jitter of the seed after a stall
CLEARANCE_CAP = 0.25  # m; clearances above this are reported as the cap


@dataclass(frozen=True)
class ArmModel:
    dh: np.ndarray  # (6, 4) rows of (a, alpha, d, theta_offset)
    joint_limits: np.ndarray  # (6, 2)
    base_pose: np.ndarray = field(default_factory=lambda: np.eye(4))  # camera <- base
    hand_from_flange: np.ndarray = field(default_factory=lambda: np.eye(4))  # hand <- flange
    home: np.ndarray = field(default_factory=lambda: np.zeros(6))
    reach: float = 1.0
    link_radius: float = 0.05
    hand_radius: float = 0.06
    name: str = "arm"

    def __post_init__(self):
        if self.dh.shape != (6, 4):
            raise ValidationError("dh", "expected 6 rows of (a, alpha, d, theta_offset)")
        lim = self.joint_limits
        if lim.shape != (6, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValidationError("joint_limits", "need 6 pairs with lo < hi")

    def within_limits(self, J, eps=1e-12):
        J = np.asarray(J, dtype=float)
        return bool(np.all(J >= self.joint_limits[:, 0] - eps) and
                    np.all(J <= self.joint_limits[:, 1] + eps))

    def clamp(self, J):
        return np.clip(J, self.joint_limits[:, 0], self.joint_limits[:, 1])


def _matrix(doc, key, default=None):
    if key not in doc:
        if default is None:
            raise ValidationError(key, "missing")
        return default
    v = doc[key]
    if isinstance(v, dict):
        R = tf.pose_to_matrix([0, 0, 0, *v.get("rpy", [0, 0, 0])])[:3, :3]
        return tf.rigid(R, v.get("translation", [0, 0, 0]))
    T = np.asarray(v, dtype=float)
    if T.shape != (4, 4):
        raise ValidationError(key, "expected a 4x4 matrix or {translation, rpy}")
    return T


def load_arm_model(document=None) -> ArmModel:
    """Arm model from a mapping or YAML path; ``None`` loads the shipped UR5-class config."""
    if document is None:
        with resources.files("voicegrasp.data").joinpath("arm_ur5.yaml").open() as fh:
            document = yaml.safe_load(fh)
    elif not isinstance(document, dict):
        p = Path(document)
        if not p.exists():
            raise ConfigError(f"arm config not found: {p}")
        document = yaml.safe_load(p.read_text())
    try:
        dh = np.array([[r["a"], r["alpha"], r["d"], r.get("theta_offset", 0.0)]
                       for r in document["dh"]], dtype=float)
        limits = np.asarray(document["joint_limits"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("dh", f"malformed arm document ({exc})") from None
    return ArmModel(
        dh, limits,
        base_pose=_matrix(document, "base_pose", np.eye(4)),
        hand_from_flange=_matrix(document, "hand_from_flange", np.eye(4)),
        home=np.asarray(document.get("home", np.zeros(6)), dtype=float),
        reach=float(document.get("reach", 1.0)),
        link_radius=float(document.get("link_radius", 0.05)),
        hand_radius=float(document.get("hand_radius", 0.06)),
        name=str(document.get("name", "arm")))


# --- kinematics ----------------------------------------------------------------

def _dh(a, alpha, d, theta):
    """Batched standard DH link transforms; theta has shape (B,)."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    T = np.zeros(theta.shape + (4, 4))
    T[..., 0, 0], T[..., 0, 1], T[..., 0, 2], T[..., 0, 3] = ct, -st * ca, st * sa, a * ct
    T[..., 1, 0], T[..., 1, 1], T[..., 1, 2], T[..., 1, 3] = st, ct * ca, -ct * sa, a * st
    T[..., 2, 1], T[..., 2, 2], T[..., 2, 3] = sa, ca, d
    T[..., 3, 3] = 1.0
    return T


def frames(model: ArmModel, J):
    """Base-frame transforms of frames 0..6 for a batch of joint vectors, shape (B, 7, 4, 4)."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    B = len(J)
    out = np.empty((B, 7, 4, 4))
    out[:, 0] = np.eye(4)
    for i, (a, alpha, d, off) in enumerate(model.dh):
        out[:, i + 1] = out[:, i] @ _dh(a, alpha, d, J[:, i] + off)
    return out


def flange_pose_base(model: ArmModel, J):
    return frames(model, J)[0, -1]


def arm_fk(model: ArmModel, J) -> np.ndarray:
    """Flange pose in the camera frame (4x4)."""
    J = np.asarray(J, dtype=float)
    if J.shape != (6,) or not model.within_limits(J):
        raise JointLimit(f"arm joints {J} outside limits")
    return model.base_pose @ flange_pose_base(model, J)


def jacobian(F):
    """Geometric Jacobian (6x6, base frame) from the frame stack of one configuration."""
    p = F[-1, :3, 3]
    Jac = np.empty((6, 6))
    for i in range(6):
        z, o = F[i, :3, 2], F[i, :3, 3]
        Jac[:3, i] = np.cross(z, p - o)
        Jac[3:, i] = z
    return Jac


def pose_error(T_target, T):
    dp = T_target[:3, 3] - T[:3, 3]
    dr = Rotation.from_matrix(T_target[:3, :3] @ T[:3, :3].T).as_rotvec()
    return np.concatenate([dp, dr])


def arm_ik(model: ArmModel, target, J0, max_iter=MAX_ITER, pos_tol=POS_TOL, ori_tol=ORI_TOL):
    """Levenberg-Marquardt damped least squares from ``J0`` to a camera-frame flange pose.

    When the damping saturates (the iterate is stuck at a singular local minimum) the
    search restarts from a jittered copy of ``J0``; ``max_iter`` bounds the total work.
    """
    T_goal = tf.invert(model.base_pose) @ np.asarray(target, dtype=float)
    J0 = model.clamp(np.asarray(J0, dtype=float))

    def done(err):
        return np.linalg.norm(err[:3]) <= pos_tol and np.linalg.norm(err[3:]) <= ori_tol

    def residual(err):
        return (float(np.linalg.norm(err[:3])), float(np.linalg.norm(err[3:])))

    if np.linalg.norm(T_goal[:3, 3]) > model.reach:
        raise NoConvergence(residual(pose_error(T_goal, flange_pose_base(model, J0))), J0)
    rng = np.random.default_rng(0)
    J, best = J0, None
    it = 0
    while it < max_iter:
        F = frames(model, J)[0]
        e = pose_error(T_goal, F[-1])
        lam = 1e-2
        while it < max_iter and lam < LAMBDA_MAX:
            if done(e):
                return J
            it += 1
            Jac = jacobian(F)
            step = Jac.T @ np.linalg.solve(Jac @ Jac.T + lam ** 2 * np.eye(6), e)
            n = np.linalg.norm(step)
            if n > 0.5:
                step *= 0.5 / n
            J_new = model.clamp(J + step)
            F_new = frames(model, J_new)[0]
            e_new = pose_error(T_goal, F_new[-1])
            if np.linalg.norm(e_new) < np.linalg.norm(e):
                J, F, e = J_new, F_new, e_new
                lam = max(lam * 0.5, 1e-6)
            else:
                lam *= 4.0
        if done(e):
            return J
        if best is None or np.linalg.norm(e) < np.linalg.norm(best[1]):
            best = (J, e)
        J = model.clamp(J0 + rng.normal(0.0, RESTART_SIGMA, 6))
    raise NoConvergence(residual(best[1]), best[0])


# --- trajectories ----------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray  # (n, 6)
    dt: float = 0.1

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 6 or len(w) < 2:
            raise ValidationError("trajectory", "need at least 2 waypoints of 6 joints")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    def __len__(self):
        return len(self.waypoints)


def plan_linear(J_start, J_goal, n_waypoints=20, dt=0.1) -> Trajectory:
    if n_waypoints < 2:
        raise ValidationError("n_waypoints", "need at least 2")
    s = np.linspace(0.0, 1.0, n_waypoints)[:, None]
    a, b = np.asarray(J_start, float), np.asarray(J_goal, float)
    w = (1 - s) * a + s * b
    w[0], w[-1] = a, b
    return Trajectory(w, dt)


def motion_cost(traj: Trajectory) -> float:
    """sqrt of the summed squared joint steps between consecutive waypoints."""
    d = np.diff(traj.waypoints, axis=0)
    return float(np.sqrt(np.sum(d * d)))


@dataclass(frozen=True)
class StompParams:
    iterations: int = 50
    rollouts: int = 8
    sigma: float = 0.05
    clearance: float = 0.02
    obstacle_weight: float = 100.0
    temperature: float = 10.0
    seed: int = 0


class _Obstacles:
    def __init__(self, model: ArmModel, cloud_base):
        pts = np.zeros((0, 3)) if cloud_base is None else np.asarray(cloud_base, float).reshape(-1, 3)
        self.tree = cKDTree(pts) if len(pts) else None
        self.model = model

    def proxies(self, W):
        """Proxy sphere centers (B, S, 3) and radii (S,): joint origins, link midpoints, hand."""
        F = frames(self.model, W)
        origins = F[:, 1:, :3, 3]
        mids = 0.5 * (origins[:, 1:] + origins[:, :-1])
        hand = (F[:, -1] @ tf.invert(self.model.hand_from_flange))[:, :3, 3]
        centers = np.concatenate([origins, mids, hand[:, None]], axis=1)
        radii = np.r_[np.full(origins.shape[1] + mids.shape[1], self.model.link_radius),
                      self.model.hand_radius]
        return centers, radii

    def clearance(self, W):
        """Per-waypoint minimum clearance, saturated at CLEARANCE_CAP (inf without obstacles)."""
        if self.tree is None:
            return np.full(len(W), np.inf)
        c, r = self.proxies(W)
        # points beyond the cap cannot matter, which lets the tree prune its search
        d, _ = self.tree.query(c.reshape(-1, 3), distance_upper_bound=CLEARANCE_CAP + r.max())
        d = np.minimum(d.reshape(c.shape[:2]) - r, CLEARANCE_CAP)
        return d.min(axis=1)


def _waypoint_costs(W, obs: _Obstacles, p: StompParams):
    """Per-waypoint cost and clearance for one (n, 6) or a batch (K, n, 6) of trajectories."""
    acc = np.zeros(W.shape[:-1])
    acc[..., 1:-1] = np.sum((W[..., 2:, :] - 2 * W[..., 1:-1, :] + W[..., :-2, :]) ** 2, axis=-1)
    clear = obs.clearance(W.reshape(-1, 6)).reshape(W.shape[:-1])
    pen = np.maximum(0.0, p.clearance - clear) ** 2 if obs.tree is not None else 0.0
    return acc + p.obstacle_weight * pen, clear


def trajectory_cost(traj: Trajectory, model: ArmModel, cloud_base=None,
                    params: StompParams = StompParams()) -> float:
    c, _ = _waypoint_costs(traj.waypoints, _Obstacles(model, cloud_base), params)
    return float(c.sum())


def stomp_refine(traj: Trajectory, model: ArmModel, cloud_base=None,
                 params: StompParams = StompParams()) -> Trajectory:
    """Simplified STOMP: noisy rollouts, softmax-weighted per-waypoint update, reject worse.

    Accepted iterations never raise the smoothness + obstacle cost nor lower the minimum
    interior clearance. ``cloud_base`` holds obstacle points in the arm base frame.
    """
    if params.iterations <= 0 or len(traj) <= 2:
        return traj
    obs = _Obstacles(model, cloud_base)
    rng = np.random.default_rng(params.seed)
    W = traj.waypoints.copy()
    costs, clear = _waypoint_costs(W, obs, params)
    total, min_clear = costs.sum(), clear[1:-1].min()
    n = len(W)
    # smoothing kernel spreads noise over neighbouring waypoints
    kernel = np.array([0.25, 0.5, 1.0, 0.5, 0.25])
    kernel /= kernel.sum()
    for _ in range(params.iterations):
        eps = ndimage.convolve1d(rng.normal(0.0, params.sigma, (params.rollouts, n, 6)),
                                 kernel, axis=1, mode="constant")
        eps[:, 0] = eps[:, -1] = 0.0
        S, _ = _waypoint_costs(model.clamp(W + eps), obs, params)
        span = S.max(axis=0) - S.min(axis=0)
        span[span == 0] = 1.0
        P = np.exp(-params.temperature * (S - S.min(axis=0)) / span)
        P /= P.sum(axis=0)
        delta = np.einsum("kn,knj->nj", P, eps)
        W_new = model.clamp(W + delta)
        W_new[0], W_new[-1] = W[0], W[-1]
        c_new, cl_new = _waypoint_costs(W_new, obs, params)
        if c_new.sum() <= total and cl_new[1:-1].min() >= min_clear:
            W, total, min_clear = W_new, c_new.sum(), cl_new[1:-1].min()
    return Trajectory(W, traj.dt)


# --- selection --------------------------------------------------------------------------

@dataclass(frozen=True)
class MotionPlan:
    index: int  # position in the ranked input list
    candidate: object
    quality: float
    joints: np.ndarray
    trajectory: Trajectory
    cost: float


def choose_min_cost(costs, qualities):
    """argmin cost; ties by higher quality, then lower index."""
    return min(range(len(costs)), key=lambda i: (costs[i], -qualities[i], i))


def flange_target(model: ArmModel, hand_pose):
    """Camera-frame flange pose that puts the hand at ``hand_pose`` (4x4 camera <- hand)."""
    return np.asarray(hand_pose, dtype=float) @ model.hand_from_flange


def plan_candidate(model: ArmModel, hand_pose, J_current, cloud_base=None, n_waypoints=20,
                   params: StompParams = StompParams()):
    J_goal = arm_ik(model, flange_target(model, hand_pose), J_current)
    traj = stomp_refine(plan_linear(J_current, J_goal, n_waypoints), model, cloud_base, params)
    return J_goal, traj, motion_cost(traj)


def select_best(ranked, model: ArmModel, J_current, cloud_base=None, n_waypoints=20,
                params: StompParams = StompParams(), pose_of=None) -> tuple[MotionPlan, list]:
    """Plan every ranked (quality, candidate) pair; return the cheapest feasible and all plans.

    ``pose_of`` maps a candidate to its 4x4 camera <- hand pose (default: ``candidate.pose.matrix``).
    """
    if not ranked:
        raise ValidationError("top3", "no candidates to select from")
    pose_of = pose_of or (lambda c: c.pose.matrix)
    plans = []
    for i, (q, cand, *_) in enumerate(ranked):
        qv = float(getattr(q, "q", q))
        try:
            J_goal, traj, cost = plan_candidate(model, pose_of(cand), J_current, cloud_base,
                                                n_waypoints, params)
        except NoConvergence as exc:
            log.info("candidate %d skipped: %s", i, exc)
            continue
        plans.append(MotionPlan(i, cand, qv, J_goal, traj, cost))
    if not plans:
        raise NoFeasibleGrasp(f"arm IK failed for all {len(ranked)} candidates")
    best = choose_min_cost([p.cost for p in plans], [p.quality for p in plans])
    return plans[best], plans
