"""Brute-force reference checks for force closure and wrench-space quality.

These deliberately avoid the engine's code paths: force closure is decided by
a self-contained non-negative least-squares search for a strictly positive
wrench combination (whose residual doubles as a separating direction when
none exists), and the inscribed radius is estimated by dense direction
sampling of the hull's support function followed by local descent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import dgr

TETRA_POINTS = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3.0)


def nnls(A, b, max_iter=None, tol=1e-12):
    """Lawson-Hanson active-set solver for min ||A x - b||, x >= 0."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    max_iter = max_iter or 30 * n
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    for _ in range(max_iter):
        if passive.all() or np.max(np.where(passive, -np.inf, w)) <= tol:
            break
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                break
            bad = passive & (z <= 0)
            alpha = np.min(x[bad] / (x[bad] - z[bad]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


@dataclass
class OracleVerdict:
    force_closure: bool
    rank: int
    residual: float
    separating_direction: np.ndarray | None = None


def force_closure_oracle(W, rank_tol=1e-9, res_tol=1e-8) -> OracleVerdict:
    """Is there lambda >= 1 with sum lambda_i w_i = 0, and do the w_i span R^6?"""
    W = np.asarray(W, dtype=float)
    s = np.linalg.svd(W, compute_uv=False) if len(W) else np.zeros(1)
    rank = int(np.count_nonzero(s > rank_tol * max(s[0], 1e-300)))
    A = W.T
    b = -A @ np.ones(len(W))
    x, res = nnls(A, b)
    fc = rank == 6 and res <= res_tol * max(1.0, np.linalg.norm(b))
    r = A @ x - b
    # KKT of the NNLS gives W r >= 0, so -r separates every wrench from the origin side
    sep = -r / np.linalg.norm(r) if res > 0 else None
    return OracleVerdict(bool(fc), rank, res, sep)


def support_min(W, u):
    return float(np.max(W @ u))


def _polish(W, u, iters=60):
    # minimise max_i w_i.u on the tangent hyperplane u0.u = 1, renormalise, repeat
    u = u / np.linalg.norm(u)
    best = support_min(W, u)
    n = len(W)
    A = np.hstack([W, -np.ones((n, 1))])
    for _ in range(iters):
        res = linprog(np.r_[np.zeros(6), 1.0], A_ub=A, b_ub=np.zeros(n),
                      A_eq=np.r_[u, 0.0][None, :], b_eq=[1.0],
                      bounds=[(None, None)] * 6 + [(None, None)], method="highs")
        if res.status != 0:
            break
        v = res.x[:6] / np.linalg.norm(res.x[:6])
        val = support_min(W, v)
        if val >= best - 1e-14:
            break
        u, best = v, val
    return best


def inscribed_radius_sampling(W, n_dirs=20000, seed=0, top=8) -> float:
    """min over unit directions u of max_i w_i.u (negative when the origin is outside)."""
    W = np.asarray(W, dtype=float)
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_dirs, 6))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    H = (U @ W.T).max(axis=1)
    starts = np.argsort(H)[:top]
    return min(_polish(W, U[i]) for i in starts)


# --- fixtures -----------------------------------------------------------------

def sphere_contacts(points, mu):
    pts = np.asarray(points, dtype=float)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    mus = np.broadcast_to(np.asarray(mu, dtype=float), (len(pts),))
    return [dgr.Contact(p, -p, float(u)) for p, u in zip(pts, mus)]


def random_sphere_fixture(rng, max_contacts=6, mu_range=(0.1, 1.0)):
    k = int(rng.integers(1, max_contacts + 1))
    p = rng.normal(size=(k, 3))
    return sphere_contacts(p, rng.uniform(*mu_range, size=k))


def tetrahedron_fixture(mu=0.5):
    return sphere_contacts(TETRA_POINTS, mu)


def antipodal_fixture(mu=0.5):
    return sphere_contacts([[1, 0, 0], [-1, 0, 0]], mu)


# --- reports ------------------------------------------------------------------

@dataclass
class OracleReport:
    kind: str
    trials: int = 0
    agree: int = 0
    positives: int = 0
    worst_error: float = 0.0
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self):
        return not self.failures

    def lines(self):
        out = [f"kind: {self.kind}", f"trials: {self.trials}"]
        if self.kind == "force-closure":
            out += [f"agreement: {self.agree}/{self.trials}",
                    f"force-closure fixtures: {self.positives}"]
        else:
            out += [f"within 10%: {self.agree}/{self.trials}",
                    f"worst relative error: {self.worst_error:.4f}"]
        out.append(f"seconds: {self.seconds:.2f}")
        out += [f"FAIL {f}" for f in self.failures]
        return out


def run_force_closure(trials, seed, m=dgr.DEFAULT_EDGES) -> OracleReport:
    rng = np.random.default_rng(seed)
    rep = OracleReport("force-closure")
    t0 = time.perf_counter()
    for i in range(trials):
        contacts = random_sphere_fixture(rng)
        W = dgr.wrench_matrix(contacts, np.zeros(3), m, rho=1.0)
        engine = dgr.wrenches_force_closure(W)
        ref = force_closure_oracle(W).force_closure
        rep.trials += 1
        rep.positives += int(ref)
        if engine == ref:
            rep.agree += 1
        else:
            rep.failures.append(f"trial {i}: {len(contacts)} contacts, engine={engine} oracle={ref}")
    rep.seconds = time.perf_counter() - t0
    return rep


def force_closure_fixtures(count, seed, m=dgr.DEFAULT_EDGES):
    """The first ``count`` force-closure fixtures from the random unit-sphere family."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        contacts = random_sphere_fixture(rng)
        if dgr.wrenches_force_closure(dgr.wrench_matrix(contacts, np.zeros(3), m, rho=1.0)):
            out.append(contacts)
    return out


def run_quality(trials, seed, m=dgr.DEFAULT_EDGES, ref_edges=dgr.ORACLE_EDGES, rel_tol=0.10):
    """Engine inscribed q (hull, m edges) vs the sampled ref_edges-edge value."""
    rep = OracleReport("quality")
    t0 = time.perf_counter()
    for i, contacts in enumerate(force_closure_fixtures(trials, seed, m)):
        q = dgr.quality(dgr.gws_from_wrenches(dgr.wrench_matrix(contacts, np.zeros(3), m, 1.0))).q
        ref = inscribed_radius_sampling(dgr.wrench_matrix(contacts, np.zeros(3), ref_edges, 1.0))
        err = abs(q - ref) / ref
        rep.trials += 1
        rep.worst_error = max(rep.worst_error, err)
        if err <= rel_tol:
            rep.agree += 1
        else:
            rep.failures.append(f"fixture {i}: {len(contacts)} contacts, q={q:.5f} ref={ref:.5f} "
                                f"rel.err={err:.3f}")
    rep.seconds = time.perf_counter() - t0
    return rep
