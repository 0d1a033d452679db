"""Discretized fields on the skeleton and the reduced elastic energy.

The unknowns of the limit model are a centerline ``V`` and a rotation field
``R`` living on the skeleton graph.  Both are discretized per edge on a
shared arc grid.  Rotation fields are either nodal (values at the grid nodes,
interpolated geodesically; the setting of the quadratic regime) or
interval-constant with values in the convex hull of the rotation group (the
relaxed setting of the soft regimes).

The elastic content of a nodal rotation field is measured per interval by the
body angular velocity ``w = log(R_k^T R_{k+1}) / h``: its components along
the segment frame are the torsion and the two bending rates

    Gamma_1 = w . t,   Gamma_2 = w . n,   Gamma_3 = w . b,

exact for piecewise-geodesic fields.  The limit energy is

    J_2(V, R) = sum_i int_0^{L_i} A Gamma . Gamma ds  -  L(V, R)

with ``A`` the cross-section stiffness matrix and ``L`` the load functional.
The limit strain matrix on a cross-section, used by the verification paths,
is assembled by :func:`assemble_limit_strain`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rodlimit.loads import evaluate_L
from rodlimit.material import q_of_strain
from rodlimit.rotation import is_rotation, log_so3

__all__ = [
    "RotationField",
    "CenterlineField",
    "LimitStrainMatrix",
    "uniform_edge_grids",
    "rotation_field_from_function",
    "identity_rotation_field",
    "centerline_from_function",
    "reference_centerline",
    "gamma_strains",
    "assemble_J2",
    "J2Result",
    "assemble_limit_strain",
]


def uniform_edge_grids(sk, nodes_per_edge):
    """Per-edge arc grids with ``nodes_per_edge`` equispaced nodes."""
    if nodes_per_edge < 2:
        raise ValueError("need at least 2 nodes per edge")
    return [np.linspace(e.s0, e.s1, nodes_per_edge) for e in sk.edges]


@dataclass
class RotationField:
    """Rotation-valued field on the skeleton graph.

    ``kind`` is ``"nodal"`` (one rotation per grid node, geodesic in between)
    or ``"interval"`` (one hull matrix per grid interval).  ``vertex_values``
    maps vertex keys to the field value there; for nodal fields these are the
    shared knot/extremity rotations, for interval fields the independent knot
    matrices of the relaxed model.
    """

    sk: object
    arcs: list            # per edge: (n_k,) arc-lengths in segment coordinates
    values: list          # per edge: (n_k, 3, 3) nodal or (n_k - 1, 3, 3) interval
    vertex_values: dict
    kind: str = "nodal"

    @property
    def nodal(self):
        return self.kind == "nodal"

    def edge_arcs(self, ei):
        return self.arcs[ei]

    def edge_values(self, ei):
        return self.values[ei]

    def at_vertex(self, key):
        return self.vertex_values[key]

    def validate(self, tol=1e-9):
        """Check nodal rotation validity and knot consistency."""
        for ei, e in enumerate(self.sk.edges):
            vals = self.values[ei]
            n = len(self.arcs[ei])
            expect = n if self.nodal else n - 1
            if len(vals) != expect:
                raise ValueError(f"edge {ei}: {len(vals)} values for {n} grid nodes")
            if self.nodal:
                if not is_rotation(vals):
                    raise ValueError(f"edge {ei}: non-rotation nodal value")
                for key, end in ((e.v0, 0), (e.v1, -1)):
                    if np.linalg.norm(vals[end] - self.vertex_values[key]) > tol:
                        raise ValueError(f"edge {ei}: endpoint value disagrees with vertex {key!r}")
        return self


@dataclass
class CenterlineField:
    """Sampled centerline positions on the same per-edge grids."""

    sk: object
    arcs: list
    values: list          # per edge: (n_k, 3)
    vertex_values: dict
    nodal: bool = field(default=True, init=False)

    def edge_arcs(self, ei):
        return self.arcs[ei]

    def edge_values(self, ei):
        return self.values[ei]

    def at_vertex(self, key):
        return self.vertex_values[key]

    def validate(self, tol=1e-9):
        """Check knot continuity and the clamp condition V = phi."""
        for ei, e in enumerate(self.sk.edges):
            vals = self.values[ei]
            for key, end in ((e.v0, 0), (e.v1, -1)):
                if np.linalg.norm(vals[end] - self.vertex_values[key]) > tol:
                    raise ValueError(f"edge {ei}: endpoint disagrees with vertex {key!r}")
        for key in self.sk.clamped:
            if np.linalg.norm(self.vertex_values[key] - self.sk.position(key)) > tol:
                raise ValueError(f"clamped vertex {key!r} moved away from its placement")
        return self


def _vertex_values_from_edges(sk, arcs, values, tol, label):
    out = {}
    for ei, e in enumerate(sk.edges):
        for key, end in ((e.v0, 0), (e.v1, -1)):
            v = values[ei][end]
            if key in out:
                if np.linalg.norm(out[key] - v) > tol:
                    raise ValueError(f"{label} discontinuous at vertex {key!r}")
            else:
                out[key] = np.array(v)
    return out


def rotation_field_from_function(sk, fn, nodes_per_edge=17):
    """Nodal rotation field sampling ``fn(segment_index, s) -> (3, 3)``."""
    arcs = uniform_edge_grids(sk, nodes_per_edge)
    values = []
    for ei, e in enumerate(sk.edges):
        values.append(np.stack([fn(e.segment, s) for s in arcs[ei]]))
    vertex_values = _vertex_values_from_edges(sk, arcs, values, 1e-9, "rotation field")
    return RotationField(sk=sk, arcs=arcs, values=values, vertex_values=vertex_values)


def identity_rotation_field(sk, nodes_per_edge=17):
    return rotation_field_from_function(sk, lambda i, s: np.eye(3), nodes_per_edge)


def centerline_from_function(sk, fn, nodes_per_edge=17):
    """Centerline field sampling ``fn(segment_index, s) -> (3,)``."""
    arcs = uniform_edge_grids(sk, nodes_per_edge)
    values = []
    for ei, e in enumerate(sk.edges):
        values.append(np.stack([np.asarray(fn(e.segment, s), dtype=float) for s in arcs[ei]]))
    vertex_values = _vertex_values_from_edges(sk, arcs, values, 1e-9, "centerline")
    return CenterlineField(sk=sk, arcs=arcs, values=values, vertex_values=vertex_values)


def reference_centerline(sk, nodes_per_edge=17):
    """The undeformed placement V = phi."""
    return centerline_from_function(
        sk, lambda i, s: sk.segments[i].origin + s * sk.segments[i].direction, nodes_per_edge
    )


def _edge_gamma(R, ei, frame):
    """Interval midpoints and Gamma rows for one edge of a nodal field."""
    s = R.edge_arcs(ei)
    vals = R.edge_values(ei)
    h = np.diff(s)
    if np.any(h <= 0.0):
        raise ValueError("edge grid must be strictly increasing")
    rel = np.swapaxes(vals[:-1], -1, -2) @ vals[1:]
    omega = log_so3(rel) / h[:, None]
    gam = omega @ frame  # rows (w.t, w.n, w.b)
    return 0.5 * (s[:-1] + s[1:]), gam, h


def gamma_strains(R, segment_index):
    """Torsion/bending strain rates of a nodal rotation field on a segment.

    Returns ``(s_mid, gamma)`` where ``s_mid`` are the interval midpoints (in
    segment arc-length) over all edges of the segment and ``gamma`` the
    corresponding ``(n, 3)`` array of ``(torsion, bend-n, bend-b)`` rates.
    """
    if not R.nodal:
        raise ValueError("gamma strains are defined for nodal rotation fields")
    sk = R.sk
    frame = sk.segments[segment_index].frame()
    mids, gams = [], []
    order = sorted(
        (ei for ei, e in enumerate(sk.edges) if e.segment == segment_index),
        key=lambda ei: sk.edges[ei].s0,
    )
    for ei in order:
        m, g, _ = _edge_gamma(R, ei, frame)
        mids.append(m)
        gams.append(g)
    return np.concatenate(mids), np.vstack(gams)


@dataclass
class J2Result:
    """Limit energy value with its per-segment elastic breakdown."""

    total: float
    elastic: float
    load_work: float
    elastic_per_segment: np.ndarray

    def __float__(self):
        return self.total


def assemble_J2(V, R, A, loads, sk):
    """Evaluate the quadratic limit functional on discretized fields.

    Midpoint quadrature per interval for the elastic term (exact for
    piecewise-geodesic rotation fields), trapezoid via :func:`evaluate_L`
    for the load work.  ``loads`` may be ``None`` for the pure elastic value.
    """
    per_segment = np.zeros(len(sk.segments))
    for ei, e in enumerate(sk.edges):
        frame = sk.segments[e.segment].frame()
        _, gam, h = _edge_gamma(R, ei, frame)
        per_segment[e.segment] += float(np.einsum("k,ki,ij,kj->", h, gam, A.matrix, gam))
    elastic = float(per_segment.sum())
    work = evaluate_L(V, R, loads, sk) if loads is not None else 0.0
    return J2Result(
        total=elastic - work,
        elastic=elastic,
        load_work=work,
        elastic_per_segment=per_segment,
    )


@dataclass
class LimitStrainMatrix:
    """Limit strain sampled at the quadrature points of a disk mesh."""

    mesh: object
    gamma: np.ndarray
    axial_stretch: float
    values: np.ndarray  # (M, q, 3, 3) in the cross-section frame

    def energy_integral(self, form):
        """Integral of the quadratic form over the cross-section."""
        vec = np.stack(
            [
                self.values[..., 0, 0],
                self.values[..., 0, 1],
                self.values[..., 0, 2],
                self.values[..., 1, 1],
                self.values[..., 1, 2],
                self.values[..., 2, 2],
            ],
            axis=-1,
        )
        dens = q_of_strain(vec, form)
        return float((self.mesh.quad_w * dens).sum())

    def ambient(self, frame):
        """Rotate the sampled matrices into the ambient basis via (t|n|b)."""
        F = np.asarray(frame, dtype=float)
        return np.einsum("ia,mqab,jb->mqij", F, self.values, F)


def assemble_limit_strain(gamma, Z, u_bar, mesh):
    """Limit strain matrix for rates ``gamma``, stretch ``Z``, relaxation ``u_bar``.

    ``u_bar`` is a nodal (N, 3) field on ``mesh`` (or None for zero).  The
    entries follow the cross-section convention: the axial-axial entry is
    ``-Y2 Gamma_3 + Y3 Gamma_2 + Z``, the axial-shear entries combine the
    torsion rate with the warping gradient, and the in-plane block is the
    symmetric gradient of the in-plane components of ``u_bar``.
    """
    gamma = np.asarray(gamma, dtype=float).reshape(3)
    pts = mesh.quad_pts  # (M, q, 2)
    y2, y3 = pts[..., 0], pts[..., 1]
    M, q = y2.shape
    E = np.zeros((M, q, 3, 3))
    E[..., 0, 0] = -y2 * gamma[2] + y3 * gamma[1] + Z
    E[..., 0, 1] = -0.5 * y3 * gamma[0]
    E[..., 0, 2] = 0.5 * y2 * gamma[0]
    if u_bar is not None:
        u_bar = np.asarray(u_bar, dtype=float)
        if u_bar.shape != (mesh.node_count, 3):
            raise ValueError(f"u_bar must be ({mesh.node_count}, 3), got {u_bar.shape}")
        tri_vals = u_bar[mesh.triangles]  # (M, 3, 3): node, component
        grads = np.einsum("mad,mac->mcd", mesh.grads, tri_vals)  # (M, comp, dY)
        E[..., 0, 1] += 0.5 * grads[:, None, 0, 0]
        E[..., 0, 2] += 0.5 * grads[:, None, 0, 1]
        E[..., 1, 1] += grads[:, None, 1, 0]
        E[..., 1, 2] += 0.5 * (grads[:, None, 1, 1] + grads[:, None, 2, 0])
        E[..., 2, 2] += grads[:, None, 2, 1]
    E[..., 1, 0] = E[..., 0, 1]
    E[..., 2, 0] = E[..., 0, 2]
    E[..., 2, 1] = E[..., 1, 2]
    return LimitStrainMatrix(mesh=mesh, gamma=gamma, axial_stretch=float(Z), values=E)
