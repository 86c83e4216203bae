"""Actuation model of an assembly: configuration matrix, inertia, frame and DOF."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .assembly import ModuleParams, ConnectionGraph, build_intermediate, poses_from

# exact subset enumeration is used up to this many distinct thrust directions
_MAX_ENUM = 14


class UnderactuatedBeyondScope(RuntimeError):
    """Configuration matrix has fewer than four controllable directions."""


def rotor_sign(j):
    """Spin sign of rotor ``j`` (1-based), the ``(-1)^j`` factor of the drag torque."""
    return -1.0 if j % 2 else 1.0


def config_matrix(params, poses):
    """6 x 4n map from squared rotor speeds to body wrench [T; M]."""
    cols = []
    for pose in poses:
        for j in range(1, 5):
            o = pose.rotors[j - 1]
            q = pose.q
            cols.append(np.concatenate([
                params.c_F * q,
                params.c_F * np.cross(o, q) + rotor_sign(j) * params.c_M * q,
            ]))
    return np.array(cols).T


def inertia_tensor(params, poses):
    J = np.zeros((3, 3))
    for pose in poses:
        x, y, z = pose.t
        J += pose.R @ params.J0 @ pose.R.T
        J += params.mass * np.array([[y * y + z * z, -x * y, -x * z],
                                     [-y * x, x * x + z * z, -y * z],
                                     [-z * x, -z * y, x * x + y * y]])
    # remove rounding asymmetry so J == J.T exactly
    return 0.5 * (J + J.T)


def max_thrust_in_direction(params, poses, d):
    d = np.asarray(d, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise ValueError("direction must be non-zero")
    d = d / nd
    per_module = 4.0 * params.c_F * params.u_max
    return float(sum(per_module * max(0.0, float(d @ p.q)) for p in poses))


def _lex_key(v):
    return tuple(np.round(v, 9))


def _best_subset_direction(qs, P=None):
    """argmax over unit d (in range of P) of sum_i max(0, d . q_i).

    The objective equals max over subsets S of ||P sum_S q_i||, attained at the
    normalised subset sum.  Returns None when every candidate is zero.
    """
    if P is None:
        P = np.eye(3)
    uniq = []
    for q in qs:
        pq = P @ q
        for k, (u, cnt) in enumerate(uniq):
            if np.allclose(u, pq, atol=1e-12):
                uniq[k] = (u, cnt + 1)
                break
        else:
            uniq.append((pq, 1))
    if len(uniq) > _MAX_ENUM:
        return _sampled_direction(qs, P)
    best, cands = 0.0, []
    vecs = [u * cnt for u, cnt in uniq]
    for r in range(1, len(vecs) + 1):
        for S in combinations(range(len(vecs)), r):
            s = np.sum([vecs[i] for i in S], axis=0)
            nrm = np.linalg.norm(s)
            if nrm <= 1e-12:
                continue
            d = s / nrm
            # objective evaluated at d (subset may be non-maximal there)
            val = sum(max(0.0, float(d @ (P @ q))) for q in qs)
            if val > best * (1 + 1e-9) + 1e-15:
                best, cands = val, [d]
            elif val >= best * (1 - 1e-9):
                cands.append(d)
    if not cands:
        return None
    return max(cands, key=_lex_key)


def _sampled_direction(qs, P, n_samples=10000):
    """Fibonacci-sphere sampling plus fixed-point refinement (large assemblies)."""
    i = np.arange(n_samples) + 0.5
    phi = np.arccos(1 - 2 * i / n_samples)
    theta = np.pi * (1 + 5 ** 0.5) * i
    pts = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    pts = pts @ P.T
    norms = np.linalg.norm(pts, axis=1)
    pts = pts[norms > 1e-6] / norms[norms > 1e-6, None]
    Q = np.array([P @ q for q in qs])
    vals = np.maximum(pts @ Q.T, 0.0).sum(axis=1)
    if vals.max() <= 1e-12:
        return None
    best, cands = 0.0, []
    for idx in np.argsort(-vals, kind="stable")[:64]:
        d = pts[idx]
        for _ in range(200):
            s = Q[(Q @ d) > 1e-12].sum(axis=0)
            if np.linalg.norm(s) < 1e-12:
                break
            d_new = s / np.linalg.norm(s)
            if np.linalg.norm(d_new - d) < 1e-15:
                break
            d = d_new
        val = np.maximum(Q @ d, 0.0).sum()
        if val > best * (1 + 1e-9):
            best, cands = val, [d]
        elif val >= best * (1 - 1e-9):
            cands.append(d)
    return max(cands, key=_lex_key)


def assembly_frame(params, poses):
    """Rotation whose columns are the assembly x, y, z axes in the poses' frame.

    z maximises achievable thrust, x maximises it within the plane normal to z.
    Ties are broken towards the lexicographically greatest axis.
    """
    qs = [p.q for p in poses]
    z = _best_subset_direction(qs)
    if z is None:
        raise ValueError("degenerate assembly: no thrust direction available")
    P = np.eye(3) - np.outer(z, z)
    x = _best_subset_direction(qs, P)
    if x is None:
        # no in-plane thrust: lexicographically greatest unit vector of the plane
        for e in np.eye(3):
            v = P @ e
            if np.linalg.norm(v) > 1e-9:
                x = v / np.linalg.norm(v)
                break
    x = x - (x @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def rank_tolerance(A):
    s = np.linalg.svd(A, compute_uv=False)
    return s, (s[0] if s.size else 0.0) * A.shape[1] * np.finfo(float).eps * 1e3


def matrix_rank(A):
    s, tol = rank_tolerance(A)
    return int(np.sum(s > tol))


def controllable_dof(A):
    r = matrix_rank(A)
    if r < 4:
        raise UnderactuatedBeyondScope(f"configuration matrix has rank {r} < 4")
    return min(r, 6)


@dataclass
class AssemblyModel:
    params: ModuleParams
    graph: ConnectionGraph
    poses: list
    A: np.ndarray
    J: np.ndarray
    total_mass: float
    dof: int
    frame: np.ndarray

    @property
    def n(self):
        return len(self.poses)


def build_model(params, graph):
    Rs, ts = build_intermediate(params, graph)
    com = np.mean(ts, axis=0)
    F = assembly_frame(params, poses_from(params, Rs, [t - com for t in ts]))
    poses = poses_from(params, [F.T @ R for R in Rs], [F.T @ (t - com) for t in ts])
    A = config_matrix(params, poses)
    # rounding in the frame rotation leaves ~1e-17 entries where the exact value
    # is zero; left in, they act as spurious singular values that delta amplifies
    A[np.abs(A) < 1e-12 * np.abs(A).max()] = 0.0
    return AssemblyModel(
        params=params,
        graph=graph,
        poses=poses,
        A=A,
        J=inertia_tensor(params, poses),
        total_mass=graph.n * params.mass,
        dof=controllable_dof(A),
        frame=F,
    )
