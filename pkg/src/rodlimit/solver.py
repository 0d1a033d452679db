"""Minimization of the limit energies over fields on the skeleton.

Two regimes are covered.  In the quadratic regime the energy

    J_2(V, R) = sum_i int A Gamma(R) . Gamma(R) ds - L(V, R)

is minimized over nodal rotation fields with values in SO(3) (identity at
clamped extremities) and centerlines V tied to R by dV/ds = R t.  Rotations
are stored as unit quaternions; descent steps retract along geodesics, so the
iterates stay exactly on the group.  V is eliminated: it is integrated from
the clamped anchors along a spanning tree of the skeleton graph using the
closed-form integral of a geodesic rotation interpolant, and the mismatch at
non-tree edges (cycles) or extra anchors is driven to zero by an augmented
Lagrangian.  Gradients are analytic, assembled in body coordinates through
the inverse Jacobians of the rotation logarithm and an adjoint sweep over the
integration tree; they are verified against finite differences in the tests.

In the soft regimes (1 < kappa < 2) the limit problem minimizes -L over
centerlines whose tangent frame lies pointwise in the convex hull of SO(3).
Hull values are parametrized by convex weights on a fixed rotation sample
set, which turns the problem into a linear program: simplex constraints per
interval, linear closure constraints for V, linear objective.  The deep
reason this works is that -L is linear in (V, R), so relaxing SO(3) to its
convex hull does not change the optimal value and the hull optimum is
attained on sampled rotations up to covering resolution.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from rodlimit.limit_energy import (
    CenterlineField,
    RotationField,
    assemble_J2,
    gamma_strains,
    uniform_edge_grids,
)
from rodlimit.loads import evaluate_L
from rodlimit.rotation import matrix_from_quat, quat_from_matrix, quat_multiply, skew

__all__ = [
    "SolveOptions",
    "SolveReport",
    "rotation_sample_set",
    "reconstruct_centerline",
    "minimize_kappa2",
    "minimize_kappa1",
]


@dataclass
class SolveOptions:
    """Tuning knobs shared by the two solve paths."""

    nodes_per_edge: int = 17
    max_iters: int = 4000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    closure_tol: float = 1e-8
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    outer_max: int = 15
    rotation_samples: int = 60
    lp_intervals_per_edge: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.grad_tol <= 0.0 or self.closure_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.rotation_samples < 24:
            raise ValueError("rotation sample count must be at least 24")


@dataclass
class SolveReport:
    """Outcome of a limit-model solve."""

    energy: float
    converged: bool
    iterations: int
    grad_norm: float
    max_closure_residual: float
    gamma: dict | None = None       # segment index -> (s_mid, (n,3) rates)
    trace: list = field(default_factory=list)
    message: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# rotation sample sets for the convex-hull regime


def _octahedral_rotations():
    """The 24 rotation matrices of the cube/octahedron symmetry group."""
    rots = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            M = np.zeros((3, 3))
            for r, (c, s) in enumerate(zip(perm, signs)):
                M[r, c] = s
            if np.linalg.det(M) > 0.5:
                rots.append(M)
    return np.asarray(rots)


def _super_fibonacci(n):
    """Deterministic low-discrepancy unit quaternions (super-Fibonacci spiral)."""
    phi = np.sqrt(2.0)
    psi = 1.533751168755204288118041
    i = np.arange(n, dtype=float) + 0.5
    u = i / n
    r = np.sqrt(u)
    big = np.sqrt(1.0 - u)
    alpha = 2.0 * np.pi * i / phi
    beta = 2.0 * np.pi * i / psi
    return np.column_stack([big * np.sin(alpha), big * np.cos(alpha), r * np.sin(beta), r * np.cos(beta)])


def rotation_sample_set(count):
    """Deterministic, prefix-nested covering of the rotation group.

    The first 24 entries are the octahedral rotation group; further entries
    are added by farthest-point selection (quaternion metric) from a fixed
    low-discrepancy pool, so the set for a smaller count is always a prefix
    of the set for a larger one.  The nesting makes hull optima monotone in
    ``count``.
    """
    count = int(count)
    if count < 24:
        raise ValueError("rotation sample sets start at 24 elements")
    base = _octahedral_rotations()
    if count == 24:
        return base
    pool = _super_fibonacci(4096)
    sel_quats = [q for q in quat_from_matrix(base)]
    # max |dot| to the selected set, per pool element (both q and -q count)
    score = np.abs(pool @ np.asarray(sel_quats).T).max(axis=1)
    extra = []
    for _ in range(count - 24):
        idx = int(np.argmin(score))
        q = pool[idx]
        extra.append(q)
        score = np.maximum(score, np.abs(pool @ q))
    return np.concatenate([base, matrix_from_quat(np.asarray(extra))])


# ---------------------------------------------------------------------------
# geodesic-interval primitives (vectorized over intervals)


def _rotvec_from_quat(q):
    w = q[..., 0]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    small = s < 1e-8
    theta = 2.0 * np.arctan2(s, w)
    safe_w = np.where(w == 0.0, 1.0, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(
            small,
            2.0 / safe_w * (1.0 - s * s / (3.0 * safe_w * safe_w)),
            theta / np.where(small, 1.0, s),
        )
    return factor[..., None] * v


def _quat_from_rotvec(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    half = 0.5 * theta
    small = theta < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / np.where(small, 1.0, theta))
    return np.concatenate([np.cos(half)[..., None], fac[..., None] * v], axis=-1)


def _quat_conj(q):
    out = np.array(q, copy=True)
    out[..., 1:] *= -1.0
    return out


def _ab_coeffs(theta):
    """Rodrigues integral coefficients a=(1-cos)/t^2, b=(t-sin)/t^3."""
    t2 = theta * theta
    small = theta < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                     (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
        b = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                     (theta - np.sin(theta)) / np.where(small, 1.0, t2 * theta))
    return a, b


def _ab_prime_over_theta(theta):
    """a'(t)/t and b'(t)/t with stable small-angle series."""
    t2 = theta * theta
    small = theta < 1e-3
    with np.errstate(invalid="ignore", divide="ignore"):
        ap = np.where(
            small,
            -1.0 / 12.0 + t2 / 180.0,
            (theta * np.sin(theta) - 2.0 * (1.0 - np.cos(theta))) / np.where(small, 1.0, t2 * t2),
        )
        bp = np.where(
            small,
            -1.0 / 60.0 + t2 / 1260.0,
            (theta * (1.0 - np.cos(theta)) - 3.0 * (theta - np.sin(theta)))
            / np.where(small, 1.0, t2 * t2 * theta),
        )
    return ap, bp


def _kappa2(theta):
    """Coefficient of the squared skew term in the inverse log Jacobians."""
    t2 = theta * theta
    small = theta < 1e-3
    half = 0.5 * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        cot_term = np.where(small, 0.0, half / np.tan(np.where(small, 1.0, half)))
        k = np.where(small, 1.0 / 12.0 + t2 / 720.0, (1.0 - cot_term) / np.where(small, 1.0, t2))
    return k


def _inv_jacobians(c):
    """Inverse left and right Jacobians of the rotation logarithm at c."""
    theta = np.linalg.norm(c, axis=-1)
    k2 = _kappa2(theta)
    C = skew(c)
    C2 = C @ C
    eye = np.broadcast_to(np.eye(3), C.shape)
    jl = eye - 0.5 * C + k2[..., None, None] * C2
    jr = eye + 0.5 * C + k2[..., None, None] * C2
    return jl, jr


def _geodesic_increment(c, t, h):
    """Integral int_0^h R_k^T R(s) t ds = h * A1(c) t and its c-derivative.

    Returns (D0, G) where D0 (n,3) is the body-frame increment and G (n,3,3)
    its Jacobian with respect to c.
    """
    theta = np.linalg.norm(c, axis=-1)
    a, b = _ab_coeffs(theta)
    ap, bp = _ab_prime_over_theta(theta)
    ct = np.cross(c, t[None, :])
    cct = np.cross(c, ct)
    D0 = h[:, None] * (t[None, :] + a[:, None] * ct + b[:, None] * cct)
    cdott = c @ t
    G = (
        ap[:, None, None] * ct[:, :, None] * c[:, None, :]
        - a[:, None, None] * skew(np.broadcast_to(t, c.shape))
        + bp[:, None, None] * cct[:, :, None] * c[:, None, :]
        + b[:, None, None]
        * (
            cdott[:, None, None] * np.broadcast_to(np.eye(3), (len(c), 3, 3))
            + c[:, :, None] * t[None, None, :]
            - 2.0 * t[None, :, None] * c[:, None, :]
        )
    )
    return D0, h[:, None, None] * G


# ---------------------------------------------------------------------------
# discrete model: variable layout and integration tree


@dataclass
class _Model:
    sk: object
    arcs: list                  # per edge nodal arc grids
    node_vars: list             # per edge int array, -1 = clamped identity
    n_vars: int
    vertex_var: dict            # vertex key -> var id (or -1 clamped)
    tree_steps: list            # (edge index, forward flag)
    chords: list                # edge indices
    extra_anchors: list         # vertex keys settled by tree but also anchored
    anchors: dict               # vertex key -> position


def _build_model(sk, nodes_per_edge, anchors=None):
    arcs = uniform_edge_grids(sk, nodes_per_edge)
    if anchors is None:
        anchors = {key: sk.position(key) for key in sk.clamped}
    if not anchors:
        raise ValueError("no anchors: clamp at least one extremity before solving")
    unknown = sorted(set(anchors) - set(sk.vertices))
    if unknown:
        raise ValueError(f"anchor keys not in the skeleton: {unknown}")

    vertex_var = {}
    n_vars = 0
    for key in sorted(sk.vertices):
        if key in sk.clamped:
            vertex_var[key] = -1
        else:
            vertex_var[key] = n_vars
            n_vars += 1
    node_vars = []
    for ei, e in enumerate(sk.edges):
        n = len(arcs[ei])
        ids = np.empty(n, dtype=np.int64)
        ids[0] = vertex_var[e.v0]
        ids[-1] = vertex_var[e.v1]
        interior = np.arange(n - 2)
        ids[1:-1] = n_vars + interior
        n_vars += n - 2
        node_vars.append(ids)

    # breadth-first spanning tree over vertices, rooted at the anchors
    settled = set()
    tree_steps = []
    chords = []
    extra = []
    frontier = []
    for key in sorted(anchors):
        if key in settled:
            extra.append(key)
        else:
            settled.add(key)
            frontier.append(key)
    incident = {key: [] for key in sk.vertices}
    for ei, e in enumerate(sk.edges):
        incident[e.v0].append(ei)
        incident[e.v1].append(ei)
    used = set()
    while frontier:
        nxt = []
        for key in frontier:
            for ei in sorted(incident[key]):
                if ei in used:
                    continue
                e = sk.edges[ei]
                other = e.v1 if e.v0 == key else e.v0
                used.add(ei)
                if other in settled:
                    chords.append(ei)
                else:
                    settled.add(other)
                    tree_steps.append((ei, e.v0 == key))
                    nxt.append(other)
        frontier = nxt
    if len(settled) != len(sk.vertices):
        raise ValueError("anchor set does not reach every component of the skeleton")
    # anchors beyond the first per component become equality constraints
    roots = _tree_roots(tree_steps, anchors, sk)
    extra = [k for k in sorted(anchors) if k not in roots]
    return _Model(
        sk=sk,
        arcs=arcs,
        node_vars=node_vars,
        n_vars=n_vars,
        vertex_var=vertex_var,
        tree_steps=tree_steps,
        chords=chords,
        extra_anchors=extra,
        anchors=dict(anchors),
    )


def _tree_roots(tree_steps, anchors, sk):
    """Anchors that actually seeded the tree (first of each component)."""
    reached = set()
    for ei, fwd in tree_steps:
        e = sk.edges[ei]
        reached.add(e.v1 if fwd else e.v0)
    return {k for k in anchors if k not in reached}


# ---------------------------------------------------------------------------
# centerline integration (shared by reconstruction, objective and adjoint)


def _edge_increments(model, ei, R_nodes, c=None):
    """Per-interval ambient increments D_k of int R t ds along edge ei."""
    e = model.sk.edges[ei]
    t = model.sk.segments[e.segment].direction
    s = model.arcs[ei]
    h = np.diff(s)
    if R_nodes.ndim == 3 and len(R_nodes) == len(s) - 1:
        # interval-constant rotations (hull matrices)
        return h[:, None] * np.einsum("kij,j->ki", R_nodes, t), None, None
    if c is None:
        rel = np.swapaxes(R_nodes[:-1], -1, -2) @ R_nodes[1:]
        c = _rotvec_from_quat(quat_from_matrix(rel))
    D0, G = _geodesic_increment(c, t, h)
    D = np.einsum("kij,kj->ki", R_nodes[:-1], D0)
    return D, D0, G


def _integrate_tree(model, edge_D, R_is_nodal=True):
    """Vertex positions and per-edge node positions from the increments."""
    sk = model.sk
    vertex_V = {}
    roots = _tree_roots(model.tree_steps, model.anchors, sk)
    for key in roots:
        vertex_V[key] = np.asarray(model.anchors[key], dtype=float)
    edge_nodes = [None] * len(sk.edges)
    for ei, fwd in model.tree_steps:
        e = sk.edges[ei]
        D = edge_D[ei]
        cum = np.vstack([np.zeros(3), np.cumsum(D, axis=0)])
        if fwd:
            V0 = vertex_V[e.v0]
            nodes = V0 + cum
            vertex_V[e.v1] = nodes[-1]
        else:
            V1 = vertex_V[e.v1]
            nodes = V1 + (cum - cum[-1])
            vertex_V[e.v0] = nodes[0]
        edge_nodes[ei] = nodes
    residuals = []
    for ei in model.chords:
        e = sk.edges[ei]
        D = edge_D[ei]
        cum = np.vstack([np.zeros(3), np.cumsum(D, axis=0)])
        nodes = vertex_V[e.v0] + cum
        edge_nodes[ei] = nodes
        residuals.append(("chord", ei, nodes[-1] - vertex_V[e.v1]))
    for key in model.extra_anchors:
        residuals.append(("anchor", key, vertex_V[key] - np.asarray(model.anchors[key])))
    return vertex_V, edge_nodes, residuals


def reconstruct_centerline(R, sk, anchors=None):
    """Integrate dV/ds = R t from anchors along a spanning tree.

    For nodal rotation fields the per-interval integral of the geodesic
    interpolant is evaluated in closed form, so the result does not depend
    on how finely an interval is subdivided.  Non-tree edges (cycles) and
    anchors beyond the first per component are not enforced; their mismatch
    is returned as a list of residuals.

    Parameters
    ----------
    R : RotationField
        Nodal or interval-constant (hull) field.
    sk : Skeleton
    anchors : dict, optional
        Vertex key -> position.  Defaults to the clamped extremities at
        their placement.

    Returns
    -------
    (CenterlineField, residuals)
        ``residuals`` is a list of ``(kind, id, vector)`` tuples.
    """
    model = _build_model(sk, 2, anchors)
    model.arcs = [np.asarray(R.edge_arcs(ei)) for ei in range(len(sk.edges))]
    edge_D = []
    for ei in range(len(sk.edges)):
        vals = R.edge_values(ei)
        D, _, _ = _edge_increments(model, ei, vals)
        edge_D.append(D)
    vertex_V, edge_nodes, residuals = _integrate_tree(model, edge_D)
    V = CenterlineField(sk=sk, arcs=model.arcs, values=edge_nodes, vertex_values=vertex_V)
    return V, residuals


# ---------------------------------------------------------------------------
# kappa = 2: retracted gradient descent with augmented Lagrangian closure


class _Kappa2Problem:
    def __init__(self, sk, A, loads, opts):
        self.sk = sk
        self.A = A
        self.loads = loads
        self.opts = opts
        self.model = _build_model(sk, opts.nodes_per_edge)
        self.frames = [sk.segments[e.segment].frame() for e in sk.edges]
        self.A_amb = [F @ A.matrix @ F.T for F in self.frames]
        # trapezoid weights per edge
        self.trap_w = []
        for s in self.model.arcs:
            h = np.diff(s)
            w = np.zeros(len(s))
            w[:-1] += 0.5 * h
            w[1:] += 0.5 * h
            self.trap_w.append(w)
        # pre-sampled segment load densities at the nodes
        self.f_nodes, self.gn_nodes, self.gb_nodes = [], [], []
        for ei, e in enumerate(sk.edges):
            sl = loads.segment_loads.get(e.segment) if loads else None
            s = self.model.arcs[ei]
            if sl is None:
                z = np.zeros((len(s), 3))
                self.f_nodes.append(z)
                self.gn_nodes.append(z)
                self.gb_nodes.append(z)
            else:
                self.f_nodes.append(sl.force(s))
                self.gn_nodes.append(sl.g_normal(s))
                self.gb_nodes.append(sl.g_binormal(s))
        self.point_loads = list(loads.point_loads) if loads else []
        self.n_res = len(self.model.chords) + len(self.model.extra_anchors)
        # Jacobi preconditioner from the dominant (elastic chain) curvature:
        # each interval contributes ~ (2/h) * ||A|| to both end nodes
        diag = np.zeros(self.model.n_vars)
        for ei in range(len(sk.edges)):
            h = np.diff(self.model.arcs[ei])
            a_ref = float(np.linalg.norm(self.A_amb[ei], 2))
            ids = self.model.node_vars[ei]
            contrib = 2.0 * a_ref / h
            for side, w in ((ids[:-1], contrib), (ids[1:], contrib)):
                mask = side >= 0
                np.add.at(diag, side[mask], w[mask])
        diag[diag <= 0.0] = 1.0
        self.precond = (1.0 / diag)[:, None]

    def initial_state(self):
        q = np.zeros((self.model.n_vars, 4))
        q[:, 0] = 1.0
        return q

    def node_quats(self, qvars, ei):
        ids = self.model.node_vars[ei]
        out = np.zeros((len(ids), 4))
        out[:, 0] = 1.0
        mask = ids >= 0
        out[mask] = qvars[ids[mask]]
        return out

    def value_and_grad(self, qvars, lam, rho):
        """Augmented objective and its body-frame gradient per variable."""
        sk = self.sk
        model = self.model
        n_edges = len(sk.edges)
        energy = 0.0
        grad = np.zeros((model.n_vars, 3))

        edge_c = [None] * n_edges
        edge_R = [None] * n_edges
        edge_D = [None] * n_edges
        edge_D0 = [None] * n_edges
        edge_G = [None] * n_edges
        edge_h = [None] * n_edges
        edge_jl = [None] * n_edges
        edge_jr = [None] * n_edges

        for ei in range(n_edges):
            q = self.node_quats(qvars, ei)
            R = matrix_from_quat(q)
            rel = quat_multiply(_quat_conj(q[:-1]), q[1:])
            flip = rel[:, 0] < 0.0
            rel[flip] *= -1.0
            c = _rotvec_from_quat(rel)
            s = model.arcs[ei]
            h = np.diff(s)
            Aamb = self.A_amb[ei]
            quad = np.einsum("ki,ij,kj->k", c, Aamb, c)
            energy += float(quad @ (1.0 / h))
            jl, jr = _inv_jacobians(c)
            D, D0, G = _edge_increments(model, ei, R, c=c)
            edge_c[ei], edge_R[ei], edge_h[ei] = c, R, h
            edge_D[ei], edge_D0[ei], edge_G[ei] = D, D0, G
            edge_jl[ei], edge_jr[ei] = jl, jr

            # elastic gradient
            Ac = np.einsum("ij,kj->ki", Aamb, c) * (2.0 / h)[:, None]
            gl = -np.einsum("kij,kj->ki", jr, Ac)
            gr = np.einsum("kij,kj->ki", jl, Ac)
            ids = model.node_vars[ei]
            np.add.at(grad, ids[:-1][ids[:-1] >= 0], gl[ids[:-1] >= 0])
            np.add.at(grad, ids[1:][ids[1:] >= 0], gr[ids[1:] >= 0])

            # g-density work (enters J2 with a minus sign)
            seg = sk.segments[sk.edges[ei].segment]
            w = self.trap_w[ei]
            gn, gb = self.gn_nodes[ei], self.gb_nodes[ei]
            if np.any(gn) or np.any(gb):
                dRn = np.einsum("kij,j->ki", R - np.eye(3), seg.normal)
                dRb = np.einsum("kij,j->ki", R - np.eye(3), seg.binormal)
                energy -= np.pi / 3.0 * float(w @ (np.einsum("ki,ki->k", gn, dRn) + np.einsum("ki,ki->k", gb, dRb)))
                Rtgn = np.einsum("kji,kj->ki", R, gn)
                Rtgb = np.einsum("kji,kj->ki", R, gb)
                gnode = -np.pi / 3.0 * w[:, None] * (
                    np.cross(np.broadcast_to(seg.normal, Rtgn.shape), Rtgn)
                    + np.cross(np.broadcast_to(seg.binormal, Rtgb.shape), Rtgb)
                )
                mask = ids >= 0
                np.add.at(grad, ids[mask], gnode[mask])

        vertex_V, edge_nodes, residuals = _integrate_tree(model, edge_D)
        res_vecs = np.array([r[2] for r in residuals]) if residuals else np.zeros((0, 3))
        if len(res_vecs):
            energy += float(np.sum(lam * res_vecs)) + 0.5 * rho * float(np.sum(res_vecs**2))

        # V-weights: dE/dV per edge node, then vertex moments and point loads
        node_w = [np.zeros((len(model.arcs[ei]), 3)) for ei in range(n_edges)]
        vertex_w = {key: np.zeros(3) for key in sk.vertices}
        for ei in range(n_edges):
            f = self.f_nodes[ei]
            if np.any(f):
                seg = sk.segments[sk.edges[ei].segment]
                s = model.arcs[ei]
                phi = seg.origin + s[:, None] * seg.direction
                w = self.trap_w[ei]
                energy -= np.pi * float(np.einsum("k,ki,ki->", w, f, edge_nodes[ei] - phi))
                node_w[ei] -= np.pi * w[:, None] * f

        for p in self.point_loads:
            pos = sk.position(p.vertex)
            Vv = vertex_V[p.vertex]
            energy -= float(p.force @ (Vv - pos))
            vertex_w[p.vertex] -= p.force
            # moment term and its rotation gradient
            vid = model.vertex_var[p.vertex]
            Rv = np.eye(3) if vid < 0 else matrix_from_quat(qvars[vid])
            energy -= float(np.sum((Rv - np.eye(3)) * p.moment))
            if vid >= 0:
                B = Rv.T @ p.moment
                grad[vid] += -2.0 * _unskew_fast(B)

        # residual weights
        for (kind, which, r), l in zip(residuals, lam if len(res_vecs) else []):
            wvec = l + rho * r
            if kind == "chord":
                e = sk.edges[which]
                node_w[which][-1] += wvec
                vertex_w[e.v1] -= wvec
            else:
                vertex_w[which] += wvec

        # adjoint sweep: push node/vertex weights back through the integration
        order = [("chord", ei) for ei in model.chords] + [
            ("tree", step) for step in reversed(model.tree_steps)
        ]
        # chords first (they consume vertex values defined by the tree)
        for kind, item in order:
            if kind == "chord":
                ei, fwd = item, True
            else:
                ei, fwd = item
            e = sk.edges[ei]
            w_nodes = node_w[ei]
            if kind == "tree":
                # the far vertex value was defined by this edge
                if fwd:
                    w_nodes[-1] += vertex_w[e.v1]
                    vertex_w[e.v1][:] = 0.0
                else:
                    w_nodes[0] += vertex_w[e.v0]
                    vertex_w[e.v0][:] = 0.0
            if fwd:
                suffix = np.cumsum(w_nodes[::-1], axis=0)[::-1]
                wD = suffix[1:]
                vertex_w[e.v0] += suffix[0]
            else:
                prefix = np.cumsum(w_nodes, axis=0)
                wD = -prefix[:-1] + 0.0
                # V_j = V(v1) + (cum_j - cum_end); d/dD_k: -1 for j <= k
                # i.e. weight on D_k is -(sum of w_j for j <= k)
                vertex_w[e.v1] += prefix[-1]
            self._accumulate_increment_grad(ei, wD, edge_R[ei], edge_D0[ei], edge_G[ei], edge_jl[ei], edge_jr[ei], grad)
        return energy, grad, residuals, vertex_V, edge_nodes

    def _accumulate_increment_grad(self, ei, wD, R, D0, G, jl, jr, grad):
        if D0 is None or not np.any(wD):
            return
        ids = self.model.node_vars[ei]
        u = np.einsum("kji,kj->ki", R[:-1], wD)
        Gu = np.einsum("kji,kj->ki", G, u)
        gl = np.cross(D0, u) - np.einsum("kij,kj->ki", jr, Gu)
        gr = np.einsum("kij,kj->ki", jl, Gu)
        mask = ids[:-1] >= 0
        np.add.at(grad, ids[:-1][mask], gl[mask])
        mask = ids[1:] >= 0
        np.add.at(grad, ids[1:][mask], gr[mask])


def _unskew_fast(B):
    return 0.5 * np.array([B[2, 1] - B[1, 2], B[0, 2] - B[2, 0], B[1, 0] - B[0, 1]])


def _retract(qvars, step):
    dq = _quat_from_rotvec(step)
    out = quat_multiply(qvars, dq)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def minimize_kappa2(sk, A, loads, opts=None):
    """Minimize the quadratic limit energy over rotation fields on ``sk``.

    Projected (retracted) gradient descent on nodal unit quaternions with
    Barzilai-Borwein step proposals and Armijo backtracking; centerline
    closure on cycles and at extra clamps is enforced by an augmented
    Lagrangian.  Starts from the stress-free state R = I, V = phi.

    Structures held taut between anchors (a straight run clamped at both
    ends at exactly its arc length) make the axial closure component
    degenerate: it responds only quadratically to rotations, so the
    attainable residual is set by the gradient floor rather than
    ``closure_tol``.  The outer loop detects the stagnation, stops
    escalating the penalty, and returns the best descent-converged round
    with ``converged=False`` and a message naming the floor.

    Returns
    -------
    (CenterlineField, RotationField, SolveReport)
    """
    opts = opts or SolveOptions()
    if not sk.clamped:
        raise ValueError("kappa=2 solve requires a nonempty clamped set")
    prob = _Kappa2Problem(sk, A, loads, opts)
    model = prob.model
    q = prob.initial_state()
    lam = np.zeros((prob.n_res, 3))
    rho = opts.penalty_init if prob.n_res else 0.0

    trace = []
    total_iters = 0
    converged = False
    gnorm = np.inf
    prev_res_norm = np.inf
    message = ""
    best = None
    for outer in range(opts.outer_max if prob.n_res else 1):
        energies = []
        E, g, residuals, _, _ = prob.value_and_grad(q, lam, rho)
        d = prob.precond * g
        step_prev = None
        d_prev = None
        alpha = 1.0
        inner = 0
        while inner < opts.max_iters:
            gnorm = float(np.sqrt((g * g).sum(axis=1).max())) if len(g) else 0.0
            if gnorm <= opts.grad_tol:
                break
            # Barzilai-Borwein proposal from the previous accepted move, in
            # the preconditioned metric
            if step_prev is not None:
                y = d - d_prev
                sy = float(np.sum(step_prev * y))
                if sy > 1e-16:
                    alpha = float(np.sum(step_prev * step_prev)) / sy
                else:
                    alpha = min(10.0 * alpha, 1e6)
                alpha = float(np.clip(alpha, 1e-12, 1e6))
            gd = float(np.sum(g * d))
            accepted = False
            a = alpha
            for _ in range(60):
                q_try = _retract(q, -a * d)
                E_try, g_try, res_try, _, _ = prob.value_and_grad(q_try, lam, rho)
                if E_try <= E - opts.armijo_c * a * gd:
                    accepted = True
                    break
                a *= 0.5
            if not accepted:
                message = "line search stalled"
                break
            step_prev = -a * d
            d_prev = d
            q, E, g, residuals = q_try, E_try, g_try, res_try
            d = prob.precond * g
            energies.append(E)
            inner += 1
            total_iters += 1
        trace.append({"outer": outer, "energies": energies, "rho": rho})
        res_vecs = np.array([r[2] for r in residuals]) if residuals else np.zeros((0, 3))
        res_norm = float(np.linalg.norm(res_vecs, axis=1).max()) if len(res_vecs) else 0.0
        inner_ok = gnorm <= opts.grad_tol
        if inner_ok and (best is None or res_norm < best[0]):
            best = (res_norm, q.copy(), gnorm)
        if not prob.n_res or res_norm <= opts.closure_tol:
            converged = gnorm <= opts.grad_tol
            break
        if not inner_ok and best is not None and res_norm >= 0.25 * best[0]:
            # The descent cannot keep up with the penalty and the residual
            # has stopped improving: structures held taut between anchors
            # make the closure constraint degenerate, and its attainable
            # residual is then set by the gradient floor, not closure_tol.
            # Growing the penalty further only corrupts the rotation field.
            message = "closure residual stagnated at its numerical floor"
            break
        lam = lam + rho * res_vecs
        if res_norm > 0.25 * prev_res_norm:
            rho *= opts.penalty_growth
        prev_res_norm = res_norm
    else:
        converged = False
        if not message:
            message = "closure residual did not reach tolerance"
    if not converged and best is not None and res_norm > opts.closure_tol:
        if gnorm > opts.grad_tol or res_norm > best[0]:
            res_norm, q, gnorm = best

    # package fields
    values = []
    for ei in range(len(sk.edges)):
        values.append(matrix_from_quat(prob.node_quats(q, ei)))
    vertex_values = {}
    for key, vid in model.vertex_var.items():
        vertex_values[key] = np.eye(3) if vid < 0 else matrix_from_quat(q[vid])
    R_field = RotationField(sk=sk, arcs=model.arcs, values=values, vertex_values=vertex_values)
    edge_D = []
    for ei in range(len(sk.edges)):
        D, _, _ = _edge_increments(model, ei, values[ei])
        edge_D.append(D)
    vertex_V, edge_nodes, residuals = _integrate_tree(model, edge_D)
    V_field = CenterlineField(sk=sk, arcs=model.arcs, values=edge_nodes, vertex_values=vertex_V)

    result = assemble_J2(V_field, R_field, A, loads, sk)
    res_vecs = np.array([r[2] for r in residuals]) if residuals else np.zeros((0, 3))
    gamma = {i: gamma_strains(R_field, i) for i in range(len(sk.segments))}
    report = SolveReport(
        energy=result.total,
        converged=converged,
        iterations=total_iters,
        grad_norm=gnorm,
        max_closure_residual=float(np.linalg.norm(res_vecs, axis=1).max()) if len(res_vecs) else 0.0,
        gamma=gamma,
        trace=trace,
        message=message or ("converged" if converged else "max iterations reached"),
        extra={"elastic": result.elastic, "load_work": result.load_work},
    )
    return V_field, R_field, report


# ---------------------------------------------------------------------------
# 1 < kappa < 2: linear program over convex-hull rotation fields


class _AffineVec:
    """A 3-vector depending affinely on the LP weight vector."""

    __slots__ = ("const", "coeffs")

    def __init__(self, const, coeffs=None):
        self.const = np.asarray(const, dtype=float).copy()
        self.coeffs = dict(coeffs) if coeffs else {}  # block key -> (3, K)

    def copy(self):
        return _AffineVec(self.const, {k: v.copy() for k, v in self.coeffs.items()})

    def add_block(self, key, mat):
        if key in self.coeffs:
            self.coeffs[key] = self.coeffs[key] + mat
        else:
            self.coeffs[key] = np.asarray(mat, dtype=float).copy()

    def minus(self, other):
        out = self.copy()
        out.const -= other.const
        for k, v in other.coeffs.items():
            out.add_block(k, -v)
        return out


def minimize_kappa1(sk, loads, opts=None):
    """Minimize -L over hull-valued piecewise-constant rotation fields.

    The rotation on each grid interval and at each knot is a convex
    combination over :func:`rotation_sample_set`; the centerline is the tree
    integral of R t, affine in the weights.  The resulting linear program
    (simplex blocks, closure equalities, linear objective) is solved exactly;
    the optimal value converges monotonically from above to the true hull
    optimum as the sample count grows.

    Returns
    -------
    (CenterlineField, RotationField, SolveReport)
        The rotation field has ``kind="interval"`` with hull-valued matrices.
    """
    opts = opts or SolveOptions()
    if not sk.clamped:
        raise ValueError("kappa<2 solve requires a nonempty clamped set")
    if not (1.0 < loads.kappa < 2.0):
        raise ValueError(f"the hull relaxation applies for 1 < kappa < 2, got kappa={loads.kappa}")
    samples = rotation_sample_set(opts.rotation_samples)
    K = len(samples)
    model = _build_model(sk, opts.lp_intervals_per_edge + 1)
    sk_edges = sk.edges

    # variable blocks: one per edge interval, one per knot vertex
    blocks = {}
    n_x = 0
    for ei in range(len(sk_edges)):
        for k in range(len(model.arcs[ei]) - 1):
            blocks[("int", ei, k)] = slice(n_x, n_x + K)
            n_x += K
    for key in sorted(sk.knot_keys):
        blocks[("knot", key)] = slice(n_x, n_x + K)
        n_x += K

    obj = np.zeros(n_x)
    obj_const = 0.0

    # walk the tree, maintaining affine vertex/node positions
    vertex_form = {}
    for key in _tree_roots(model.tree_steps, model.anchors, sk):
        vertex_form[key] = _AffineVec(model.anchors[key])

    # precompute per-edge sample increments R_m t (3, K)
    edge_Rt = []
    for e in sk_edges:
        t = sk.segments[e.segment].direction
        edge_Rt.append(np.einsum("mij,j->im", samples, t))

    def add_work(form, weight, phi):
        """Add -weight.(V(form) - phi) to the minimized objective."""
        nonlocal obj_const
        obj_const += -float(weight @ (form.const - phi))
        for key, mat in form.coeffs.items():
            obj[blocks[key]] += -(weight @ mat)

    def accumulate_edge(ei, start_form, fwd):
        """Walk edge ei from its settled end, adding its work terms.

        ``start_form`` is the affine position of the settled end (v0 when
        walking forward, v1 otherwise).  Scatters the f-density work with
        trapezoid weights and the interval g-work into the objective and
        returns the affine form at the far end.
        """
        nonlocal obj_const
        e = sk_edges[ei]
        seg = sk.segments[e.segment]
        s = model.arcs[ei]
        h = np.diff(s)
        sload = loads.segment_loads.get(e.segment)
        w = np.zeros(len(s))
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        if fwd:
            s0_form = start_form
        else:
            s0_form = start_form.copy()
            for k in range(len(h)):
                s0_form.add_block(("int", ei, k), -h[k] * edge_Rt[ei])
        node_form = s0_form
        for j in range(len(s)):
            if sload is not None:
                f = sload.force(np.array([s[j]]))[0]
                if np.any(f):
                    phi = seg.origin + s[j] * seg.direction
                    add_work(node_form, np.pi * w[j] * f, phi)
            if j < len(h):
                node_form = node_form.copy()
                node_form.add_block(("int", ei, j), h[j] * edge_Rt[ei])
        if sload is not None:
            for k in range(len(h)):
                ss = np.linspace(s[k], s[k + 1], 3)
                gn = np.trapezoid(sload.g_normal(ss), ss, axis=0)
                gb = np.trapezoid(sload.g_binormal(ss), ss, axis=0)
                if np.any(gn) or np.any(gb):
                    coeff = np.pi / 3.0 * (
                        np.einsum("i,mij,j->m", gn, samples, seg.normal)
                        + np.einsum("i,mij,j->m", gb, samples, seg.binormal)
                    )
                    obj[blocks[("int", ei, k)]] += -coeff  # minimize -L
                    obj_const += np.pi / 3.0 * (float(gn @ seg.normal) + float(gb @ seg.binormal))
        return node_form if fwd else s0_form

    for ei, fwd in model.tree_steps:
        e = sk_edges[ei]
        start = vertex_form[e.v0] if fwd else vertex_form[e.v1]
        vertex_form[e.v1 if fwd else e.v0] = accumulate_edge(ei, start, fwd)

    eq_rows = []
    eq_rhs = []
    for ei in model.chords:
        e = sk_edges[ei]
        far = accumulate_edge(ei, vertex_form[e.v0], True)
        diff = far.minus(vertex_form[e.v1])
        for r in range(3):
            row = np.zeros(n_x)
            for key, mat in diff.coeffs.items():
                row[blocks[key]] = mat[r]
            eq_rows.append(row)
            eq_rhs.append(-diff.const[r])
    for key in model.extra_anchors:
        diff = vertex_form[key]
        target = np.asarray(model.anchors[key])
        for r in range(3):
            row = np.zeros(n_x)
            for bkey, mat in diff.coeffs.items():
                row[blocks[bkey]] = mat[r]
            eq_rows.append(row)
            eq_rhs.append(target[r] - diff.const[r])

    # point loads
    tr_samples = np.einsum("mii->m", samples)
    for p in loads.point_loads:
        key = p.vertex
        if np.any(p.force):
            form = vertex_form[key]
            phi = sk.position(key)
            obj_const += -float(p.force @ (form.const - phi))
            for bkey, mat in form.coeffs.items():
                obj[blocks[bkey]] += -(p.force @ mat)
        if np.any(p.moment):
            if sk.vertices[key].kind == "knot":
                bkey = ("knot", key)
            else:
                # extremity: couple to the adjacent interval's rotation
                ei = next(
                    i for i, e in enumerate(sk_edges) if key in (e.v0, e.v1)
                )
                k = 0 if sk_edges[ei].v0 == key else len(model.arcs[ei]) - 2
                bkey = ("int", ei, k)
            coeff = np.einsum("ij,mij->m", p.moment, samples)
            obj[blocks[bkey]] += -coeff
            obj_const += float(np.trace(p.moment))

    # simplex constraints
    for bkey, sl in blocks.items():
        row = np.zeros(n_x)
        row[sl] = 1.0
        eq_rows.append(row)
        eq_rhs.append(1.0)

    res = scipy.optimize.linprog(
        obj,
        A_eq=np.asarray(eq_rows),
        b_eq=np.asarray(eq_rhs),
        bounds=(0.0, None),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(
            f"hull LP failed ({res.status}): {res.message}; "
            "check that the clamped set anchors every component"
        )
    x = res.x

    # package: interval hull matrices and knot matrices
    values = []
    for ei in range(len(sk_edges)):
        mats = []
        for k in range(len(model.arcs[ei]) - 1):
            wgt = x[blocks[("int", ei, k)]]
            mats.append(np.einsum("m,mij->ij", wgt, samples))
        values.append(np.asarray(mats))
    vertex_values = {}
    for key in sk.vertices:
        if ("knot", key) in blocks:
            wgt = x[blocks[("knot", key)]]
            vertex_values[key] = np.einsum("m,mij->ij", wgt, samples)
        else:
            ei = next(i for i, e in enumerate(sk_edges) if key in (e.v0, e.v1))
            k = 0 if sk_edges[ei].v0 == key else len(values[ei]) - 1
            vertex_values[key] = values[ei][k]
    R_field = RotationField(
        sk=sk, arcs=model.arcs, values=values, vertex_values=vertex_values, kind="interval"
    )
    V_field, residuals = reconstruct_centerline(R_field, sk)
    res_vecs = np.array([r[2] for r in residuals]) if residuals else np.zeros((0, 3))
    value = float(res.fun + obj_const)
    check = -evaluate_L(V_field, R_field, loads, sk)
    report = SolveReport(
        energy=value,
        converged=True,
        iterations=int(res.nit) if res.nit is not None else 0,
        grad_norm=0.0,
        max_closure_residual=float(np.linalg.norm(res_vecs, axis=1).max()) if len(res_vecs) else 0.0,
        gamma=None,
        message="optimal",
        extra={
            "samples": K,
            "objective_check": check,
            "weights": {str(k): x[sl].tolist() for k, sl in blocks.items()},
        },
    )
    return V_field, R_field, report
