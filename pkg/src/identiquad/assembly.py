"""Module geometry and rigid assembly construction.

A module is a standard quadrotor with a cross-shaped connector frame
underneath.  Frame arm ``k`` points along azimuth ``(k-1)*pi/2`` (halfway
between two rotor arms) and ends in a connector whose outward normal is
tilted by ``alpha`` from the module z-axis inside the arm's vertical plane.
Two connectors mate face to face; ``beta`` twists the child about the
shared normal.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .so3 import E3, rot_x, rot_y, rot_z

GRAVITY = 9.81


class AssemblyError(ValueError):
    """Invalid module parameters or connection graph."""


@dataclass
class ModuleParams:
    mass: float = 0.5
    arm_half_span: float = 0.15
    frame_arm_length: float = 0.20
    J0: np.ndarray = field(default_factory=lambda: np.diag([2.5e-3, 2.5e-3, 4.3e-3]))
    c_F: float = 3.25e-6
    c_M: float = 7.5e-8
    u_max: float = 2200.0 ** 2
    alpha: float = np.pi / 2

    def __post_init__(self):
        self.J0 = np.array(self.J0, dtype=float)
        if self.J0.shape != (3, 3):
            raise AssemblyError("J0 must be 3x3")
        for name in ("mass", "c_F", "c_M", "u_max", "arm_half_span", "frame_arm_length"):
            if not getattr(self, name) > 0:
                raise AssemblyError(f"{name} must be positive")
        if not (np.pi / 4 - 1e-12 <= self.alpha <= 3 * np.pi / 4 + 1e-12):
            raise AssemblyError(f"alpha={self.alpha} outside [pi/4, 3pi/4]")
        if not np.allclose(self.J0, self.J0.T) or np.min(np.linalg.eigvalsh(self.J0)) <= 0:
            raise AssemblyError("J0 must be symmetric positive definite")


@dataclass(frozen=True)
class Edge:
    """Rigid link: ``parent`` connector ``parent_connector`` mates ``child`` connector ``child_connector``.

    Module and connector ids are 1-based.
    """
    parent: int
    parent_connector: int
    child: int
    child_connector: int
    beta: float = 0.0


@dataclass
class ConnectionGraph:
    n: int
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.edges = [e if isinstance(e, Edge) else Edge(*e) for e in self.edges]

    @classmethod
    def chain(cls, n, beta=0.0):
        """Straight path through opposite connectors (1 -> 3) with alternating twist.

        Joints use +beta and -beta in turn.  With a constant twist the
        roll-induced yaw torques of the modules add up; alternating the sign
        makes them cancel, and any beta that is not a multiple of pi lifts the
        thrust directions out of a common plane.
        """
        neg = (-beta) % (2 * np.pi)
        if neg >= 2 * np.pi:  # -tiny % 2pi rounds up to 2pi
            neg = 0.0
        return cls(n, [Edge(i, 1, i + 1, 3, beta if i % 2 else neg) for i in range(1, n)])

    @classmethod
    def ring(cls, n, beta=0.0):
        """Straight path through opposite connectors (1 -> 3), constant twist.

        With beta = 0 every joint rotates about a horizontal axis, so all thrust directions
        stay in one plane; with alpha = pi/4 and n = 4 the path closes into a
        square ring.
        """
        return cls(n, [Edge(i, 1, i + 1, 3, beta) for i in range(1, n)])

    @classmethod
    def cross(cls, n, beta=0.0):
        """Hub module 1 with up to four arms; module k > 5 extends the arm of module k - 4."""
        edges = []
        for k in range(2, n + 1):
            if k <= 5:
                edges.append(Edge(1, k - 1, k, 3, beta))
            else:
                edges.append(Edge(k - 4, 1, k, 3, beta))
        return cls(n, edges)

    @classmethod
    def from_layout(cls, layout, n, beta=0.0):
        try:
            make = {"chain": cls.chain, "ring": cls.ring, "cross": cls.cross}[layout]
        except KeyError:
            raise AssemblyError(f"unknown layout {layout!r}; expected chain, ring or cross") from None
        return make(n, beta)

    def validate(self):
        if self.n < 1:
            raise AssemblyError("need at least one module")
        if len(self.edges) != self.n - 1:
            raise AssemblyError(f"{len(self.edges)} edges for {self.n} modules; a spanning tree needs {self.n - 1}")
        used = set()
        for e in self.edges:
            for mod, con in ((e.parent, e.parent_connector), (e.child, e.child_connector)):
                if not 1 <= mod <= self.n:
                    raise AssemblyError(f"module id {mod} out of range 1..{self.n}")
                if con not in (1, 2, 3, 4):
                    raise AssemblyError(f"connector id {con} not in 1..4")
                if (mod, con) in used:
                    raise AssemblyError(f"connector {con} of module {mod} used twice")
                used.add((mod, con))
            if e.parent == e.child:
                raise AssemblyError(f"self-loop on module {e.parent}")
            if not 0.0 <= e.beta < 2 * np.pi:
                raise AssemblyError(f"beta={e.beta} outside [0, 2pi)")
        # n-1 edges + connected <=> tree
        if len(_bfs_order(self)) != self.n:
            raise AssemblyError("connection graph is not connected (or contains a cycle)")


@dataclass
class ModulePose:
    R: np.ndarray       # module -> assembly frame
    t: np.ndarray       # module centre relative to assembly COM
    rotors: np.ndarray  # (4, 3) rotor hubs relative to assembly COM
    q: np.ndarray       # thrust direction R e3


def rotor_offsets(arm_half_span):
    """Rotor hubs in the module frame, counterclockwise from the +x/+y diagonal."""
    angles = np.pi / 4 + np.arange(4) * np.pi / 2
    return arm_half_span * np.stack([np.cos(angles), np.sin(angles), np.zeros(4)], axis=1)


def connector_frame(k, alpha):
    """Rotation whose z-axis is the outward normal of connector ``k`` (1-based)."""
    return rot_z((k - 1) * np.pi / 2) @ rot_y(alpha)


def connector_position(k, frame_arm_length):
    a = (k - 1) * np.pi / 2
    return frame_arm_length * np.array([np.cos(a), np.sin(a), 0.0])


def mating_transform(params, parent_connector, child_connector, beta):
    """Pose of the child module expressed in the parent module frame."""
    Cp = connector_frame(parent_connector, params.alpha)
    Cc = connector_frame(child_connector, params.alpha)
    # Rx(pi) turns the child normal against the parent normal
    R = Cp @ rot_z(beta) @ rot_x(np.pi) @ Cc.T
    t = connector_position(parent_connector, params.frame_arm_length) - R @ connector_position(
        child_connector, params.frame_arm_length)
    return R, t


def _bfs_order(graph):
    adj = {i: [] for i in range(1, graph.n + 1)}
    for e in graph.edges:
        if e.parent in adj and e.child in adj:
            adj[e.parent].append((e.child, e, False))
            adj[e.child].append((e.parent, e, True))
    seen = {1: None}
    order = [1]
    queue = deque([1])
    while queue:
        cur = queue.popleft()
        for nxt, e, inverted in adj[cur]:
            if nxt not in seen:
                seen[nxt] = (cur, e, inverted)
                order.append(nxt)
                queue.append(nxt)
    return [(i, seen[i]) for i in order]


def build_intermediate(params, graph):
    """Module rotations/centres in the root module's frame (module 1 at the origin)."""
    graph.validate()
    Rs = {}
    ts = {}
    for mod, link in _bfs_order(graph):
        if link is None:
            Rs[mod], ts[mod] = np.eye(3), np.zeros(3)
            continue
        prev, e, inverted = link
        R_rel, t_rel = mating_transform(params, e.parent_connector, e.child_connector, e.beta)
        if inverted:
            R_rel, t_rel = R_rel.T, -R_rel.T @ t_rel
        Rs[mod] = Rs[prev] @ R_rel
        ts[mod] = Rs[prev] @ t_rel + ts[prev]
    Rs = [Rs[i] for i in range(1, graph.n + 1)]
    ts = [ts[i] for i in range(1, graph.n + 1)]
    return Rs, ts


def poses_from(params, Rs, ts):
    offsets = rotor_offsets(params.arm_half_span)
    poses = []
    for R, t in zip(Rs, ts):
        R = np.asarray(R, dtype=float)
        t = np.asarray(t, dtype=float)
        poses.append(ModulePose(R=R, t=t, rotors=t + offsets @ R.T, q=R @ E3))
    return poses


def build_assembly(params, graph):
    """Module poses relative to the assembly COM, expressed in the assembly frame."""
    from .actuation import assembly_frame

    Rs, ts = build_intermediate(params, graph)
    com = np.mean(ts, axis=0)
    centred = poses_from(params, Rs, [t - com for t in ts])
    F = assembly_frame(params, centred)
    return poses_from(params, [F.T @ R for R in Rs], [F.T @ (t - com) for t in ts])


@dataclass
class FeasibilityReport:
    space_ok: bool
    thrust_ok: bool
    downwash_ok: bool
    max_thrust: float
    weight: float
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self):
        return self.space_ok and self.thrust_ok and self.downwash_ok


def check_feasibility(params, poses, hover_dir=E3, margin=0.02):
    """Report the three assembly limitations: free space, hover thrust, downwash."""
    from .actuation import max_thrust_in_direction

    diag = []
    n = len(poses)
    # rotor-footprint spheres; frame arms of mated modules touch by construction
    radius = params.arm_half_span + margin
    space_ok = True
    for a in range(n):
        for b in range(a + 1, n):
            d = np.linalg.norm(poses[a].t - poses[b].t)
            if d < 2 * radius:
                space_ok = False
                diag.append(f"modules {a + 1} and {b + 1} overlap: centre distance {d:.4f} m < {2 * radius:.4f} m")

    hover_dir = np.asarray(hover_dir, dtype=float)
    hover_dir = hover_dir / np.linalg.norm(hover_dir)
    max_thrust = max_thrust_in_direction(params, poses, hover_dir)
    weight = n * params.mass * GRAVITY
    thrust_ok = max_thrust > weight
    if not thrust_ok:
        diag.append(f"max thrust {max_thrust:.3f} N along hover direction does not exceed weight {weight:.3f} N")

    downwash_ok = True
    cyl = params.arm_half_span + margin
    for i, pi in enumerate(poses):
        for k, pk in enumerate(poses):
            if i == k:
                continue
            d = pk.t - pi.t
            along = -d @ pi.q
            radial = np.linalg.norm(d + along * pi.q)
            if along > 0 and radial < cyl:
                downwash_ok = False
                diag.append(f"module {k + 1} sits in the downwash of module {i + 1} "
                            f"({along:.3f} m below, {radial:.3f} m off-axis)")
    return FeasibilityReport(space_ok, thrust_ok, downwash_ok, float(max_thrust), float(weight), diag)
