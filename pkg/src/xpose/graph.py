"""SE(3) pose-graph optimization for loop closure.

Nodes hold world->camera transforms; an edge (i, j) with measurement Z is
satisfied when Z = T_i o T_j^-1 (the transform taking j-frame coordinates to
i-frame coordinates).  Node 0 is the gauge and never moves.  Closure edges
from the pair estimator default to rotation-only because the estimated
translation carries object scale, not metric scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .errors import DisconnectedGraph, NearPiRotation
from .geom import RigidTransform

logger = logging.getLogger(__name__)

EDGE_KINDS = ("odometry", "closure_full", "closure_rotation_only")

_JACOBIAN_STEP = 1e-6


def _hat(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi)
    K = _hat(phi)
    if theta < 1e-6:
        return np.eye(3) + K + 0.5 * (K @ K)
    return (
        np.eye(3)
        + (math.sin(theta) / theta) * K
        + ((1.0 - math.cos(theta)) / theta**2) * (K @ K)
    )


def so3_log(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    theta = math.acos(min(1.0, max(-1.0, c)))
    if math.degrees(theta) > 180.0 - 1e-6:
        raise NearPiRotation("rotation angle within tolerance of 180 deg")
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return vee * (1.0 + theta * theta / 6.0)
    return vee * (theta / math.sin(theta))


def se3_exp(v) -> RigidTransform:
    """Exponential of a twist [rho; phi] (translation first)."""
    v = np.asarray(v, dtype=np.float64)
    rho, phi = v[:3], v[3:]
    theta = np.linalg.norm(phi)
    K = _hat(phi)
    KK = K @ K
    if theta < 1e-6:
        a = 0.5 - theta * theta / 24.0
        b = 1.0 / 6.0 - theta * theta / 120.0
    else:
        a = (1.0 - math.cos(theta)) / theta**2
        b = (theta - math.sin(theta)) / theta**3
    V = np.eye(3) + a * K + b * KK
    return RigidTransform(so3_exp(phi), V @ rho)


def se3_log(T: RigidTransform) -> np.ndarray:
    """Logarithm of a rigid transform; inverse of :func:`se3_exp`."""
    phi = so3_log(T.rotation)
    theta = np.linalg.norm(phi)
    K = _hat(phi)
    KK = K @ K
    if theta < 1e-6:
        Vinv = np.eye(3) - 0.5 * K + (1.0 / 12.0) * KK
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta**2
        Vinv = np.eye(3) - 0.5 * K + ((1.0 - a / (2.0 * b)) / theta**2) * KK
    return np.concatenate([Vinv @ T.translation, phi])


@dataclass(frozen=True)
class PoseGraphEdge:
    i: int
    j: int
    measurement: RigidTransform
    kind: str = "odometry"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {self.kind!r}")
        if self.weight <= 0:
            raise ValueError("edge weight must be positive")


@dataclass
class PoseGraph:
    nodes: list
    edges: list = field(default_factory=list)

    def __post_init__(self):
        for e in self.edges:
            self._check_edge(e)

    def _check_edge(self, e: PoseGraphEdge):
        n = len(self.nodes)
        if not (0 <= e.i < n and 0 <= e.j < n):
            raise ValueError(f"edge ({e.i}, {e.j}) references a missing node")

    def add_edge(self, edge: PoseGraphEdge):
        self._check_edge(edge)
        self.edges.append(edge)


def _edge_residual(edge: PoseGraphEdge, T_i: RigidTransform, T_j: RigidTransform):
    rel = T_i.compose(T_j.inverse())
    err = edge.measurement.inverse().compose(rel)
    try:
        if edge.kind == "closure_rotation_only":
            r = so3_log(err.rotation)
        else:
            r = se3_log(err)
    except NearPiRotation as exc:
        raise NearPiRotation(f"edge ({edge.i}, {edge.j}): {exc}") from None
    return math.sqrt(edge.weight) * r


def graph_residual_vector(graph: PoseGraph, nodes=None) -> np.ndarray:
    nodes = graph.nodes if nodes is None else nodes
    parts = [_edge_residual(e, nodes[e.i], nodes[e.j]) for e in graph.edges]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def _check_connected(graph: PoseGraph):
    n = len(graph.nodes)
    adj = [[] for _ in range(n)]
    for e in graph.edges:
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    seen = {0}
    stack = [0]
    while stack:
        k = stack.pop()
        for m in adj[k]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise DisconnectedGraph(f"nodes not reachable from node 0: {missing}")


@dataclass(frozen=True)
class OptimizeResult:
    graph: PoseGraph
    residual_history: list


def optimize(
    graph: PoseGraph, max_iters: int = 50, damping: float = 1e-3
) -> OptimizeResult:
    """Levenberg-Marquardt over all nodes except the fixed gauge node 0.

    Minimizes the sum of w * |log(Z^-1 T_i T_j^-1)|^2 with numeric
    central-difference Jacobians.  The residual history contains the cost of
    the initial state and of every accepted step, and is non-increasing.
    """
    _check_connected(graph)
    nodes = list(graph.nodes)
    n_free = len(nodes) - 1

    def cost_of(current) -> float:
        r = graph_residual_vector(graph, current)
        return float(r @ r)

    def apply_step(current, delta):
        out = list(current)
        for m in range(n_free):
            out[m + 1] = se3_exp(delta[6 * m : 6 * m + 6]).compose(current[m + 1])
        return out

    history = [cost_of(nodes)]
    if n_free == 0 or not graph.edges or history[0] < 1e-18:
        return OptimizeResult(PoseGraph(nodes, list(graph.edges)), history)

    lam = damping
    for _ in range(max_iters):
        r0 = graph_residual_vector(graph, nodes)
        J = np.zeros((r0.size, 6 * n_free))
        for m in range(n_free):
            for k in range(6):
                step = np.zeros(6)
                step[k] = _JACOBIAN_STEP
                plus = list(nodes)
                plus[m + 1] = se3_exp(step).compose(nodes[m + 1])
                minus = list(nodes)
                minus[m + 1] = se3_exp(-step).compose(nodes[m + 1])
                rp = graph_residual_vector(graph, plus)
                rm = graph_residual_vector(graph, minus)
                J[:, 6 * m + k] = (rp - rm) / (2.0 * _JACOBIAN_STEP)
        g = J.T @ r0
        H = J.T @ J

        accepted = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(H + lam * np.eye(H.shape[0]), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = apply_step(nodes, delta)
            trial_cost = cost_of(trial)
            if trial_cost < history[-1]:
                nodes = trial
                history.append(trial_cost)
                lam = max(lam * 0.5, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if len(history) >= 2 and history[-2] - history[-1] < 1e-16:
            break
        if history[-1] < 1e-18:
            break
    return OptimizeResult(PoseGraph(nodes, list(graph.edges)), history)


# --- text serialization ----------------------------------------------------


def _quat_from_rotation(R) -> np.ndarray:
    q = _ScipyRotation.from_matrix(R).as_quat()  # (x, y, z, w)
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)


def _rotation_from_quat(q) -> np.ndarray:
    return _ScipyRotation.from_quat(np.asarray(q, dtype=np.float64)).as_matrix()


def save_graph(graph: PoseGraph, path) -> None:
    """One record per line: NODE id tx ty tz qx qy qz qw and
    EDGE kind i j tx ty tz qx qy qz qw weight."""
    lines = []
    for idx, node in enumerate(graph.nodes):
        q = _quat_from_rotation(node.rotation)
        t = node.translation
        lines.append(
            "NODE %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g"
            % (idx, t[0], t[1], t[2], q[0], q[1], q[2], q[3])
        )
    for e in graph.edges:
        q = _quat_from_rotation(e.measurement.rotation)
        t = e.measurement.translation
        lines.append(
            "EDGE %s %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g"
            % (e.kind, e.i, e.j, t[0], t[1], t[2], q[0], q[1], q[2], q[3], e.weight)
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path) -> PoseGraph:
    nodes: dict[int, RigidTransform] = {}
    edges = []
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "NODE":
                if len(parts) != 9:
                    raise ValueError(f"line {ln}: NODE needs 8 fields")
                idx = int(parts[1])
                t = np.array([float(x) for x in parts[2:5]])
                q = [float(x) for x in parts[5:9]]
                nodes[idx] = RigidTransform(_rotation_from_quat(q), t)
            elif parts[0] == "EDGE":
                if len(parts) != 12:
                    raise ValueError(f"line {ln}: EDGE needs 11 fields")
                kind = parts[1]
                i, j = int(parts[2]), int(parts[3])
                t = np.array([float(x) for x in parts[4:7]])
                q = [float(x) for x in parts[7:11]]
                weight = float(parts[11])
                edges.append(
                    PoseGraphEdge(i, j, RigidTransform(_rotation_from_quat(q), t), kind, weight)
                )
            else:
                raise ValueError(f"line {ln}: unknown record {parts[0]!r}")
    if sorted(nodes) != list(range(len(nodes))):
        raise ValueError("node ids must be contiguous from 0")
    return PoseGraph([nodes[i] for i in range(len(nodes))], edges)
