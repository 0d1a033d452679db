"""Applied loads of the limit rod models and the reduced linear functional.

Loads come in two flavours.  Along each segment act line densities: a force
``f`` and two moment-like densities ``g_n``, ``g_b`` conjugate to the rotation
of the cross-section frame.  At skeleton vertices act reduced point loads: a
resultant force ``Phi`` and a moment matrix ``M`` conjugate to ``R(A) - I`` in
the Frobenius inner product.  The reduced work functional is

    L(V, R) = sum_i pi * int_0^L_i [ f.(V - phi) + (g_n/3).(R - I)n
                                     + (g_b/3).(R - I)b ] ds
              + sum_A [ Phi_A.(V(A) - phi(A)) + <R(A) - I, M_A>_F ]

where phi is the undeformed placement of the skeleton.  Point loads are
accepted at any vertex, knot or free extremity; the moment matrix of a point
load at a knot is what the volume forces acting inside the junction reduce
to, and :func:`reduce_junction_loads` performs exactly that reduction from
sampled data on the rescaled (unit thickness) junction.

Values stored here are the reduced quantities of the limit model: thickness
scaling prefactors belong exclusively to the 3D energy evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SegmentLoad",
    "PointLoad",
    "LoadSet",
    "JunctionGrid",
    "junction_reference_grid",
    "reduce_junction_loads",
    "evaluate_L",
]


@dataclass
class SegmentLoad:
    """Piecewise-linear load densities along one segment.

    ``table`` has rows ``(s, fx, fy, fz, gnx, gny, gnz, gbx, gby, gbz)`` with
    strictly increasing ``s`` covering the whole segment.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[1] != 10:
            raise ValueError("segment load table needs rows (s, f[3], g_n[3], g_b[3])")
        if np.any(np.diff(t[:, 0]) <= 0.0):
            raise ValueError("segment load table arc-lengths must be strictly increasing")
        self.table = t

    def _interp(self, s, cols):
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape + (3,))
        for k, c in enumerate(cols):
            out[..., k] = np.interp(s, self.table[:, 0], self.table[:, c])
        return out

    def force(self, s):
        return self._interp(s, (1, 2, 3))

    def g_normal(self, s):
        return self._interp(s, (4, 5, 6))

    def g_binormal(self, s):
        return self._interp(s, (7, 8, 9))


@dataclass
class PointLoad:
    """Reduced point load at a skeleton vertex."""

    vertex: str
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.moment = np.asarray(self.moment, dtype=float).reshape(3, 3)


@dataclass
class LoadSet:
    """All loads of one problem plus the load-scaling exponent kappa."""

    kappa: float
    segment_loads: dict = field(default_factory=dict)   # segment index -> SegmentLoad
    point_loads: list = field(default_factory=list)     # list of PointLoad

    def __post_init__(self):
        if self.kappa < 1.0:
            raise ValueError(f"kappa must be at least 1, got {self.kappa}")

    @property
    def kappa_prime(self):
        """Energy-scaling exponent: 2 kappa - 2 up to kappa = 2, then kappa."""
        return 2.0 * self.kappa - 2.0 if self.kappa <= 2.0 else self.kappa

    def point_loads_at(self, vertex):
        return [p for p in self.point_loads if p.vertex == vertex]


@dataclass
class JunctionGrid:
    """Quadrature grid over a rescaled junction (thickness 1, radius rho0)."""

    center: np.ndarray
    points: np.ndarray   # (P, 3)
    weights: np.ndarray  # (P,)


def junction_reference_grid(sk, knot_index, n_axial=8, n_rings=5, n_angles=16):
    """Midpoint quadrature grid on the rescaled junction of a knot.

    The rescaled junction is the union, over segments incident to the knot,
    of cylinders of radius 1 and axial half-length ``rho0`` (one-sided where
    the knot is a segment endpoint).  Overlap between cylinders is assigned
    to the incident segment of lowest index so the weights add up to the
    volume of the union.
    """
    knot = sk.knots[knot_index]
    A = knot.position
    rho0 = sk.rho0
    pieces = []
    for i, a in knot.incidence:
        seg = sk.segments[i]
        lo = -rho0 if a > sk.geom_tol else 0.0
        hi = rho0 if a < seg.length - sk.geom_tol else 0.0
        pieces.append((i, seg, lo, hi))

    du = None
    pts, wts = [], []
    r_edges = np.linspace(0.0, 1.0, n_rings + 1)
    for rank, (i, seg, lo, hi) in enumerate(pieces):
        if hi - lo <= 0.0:
            continue
        u = lo + (np.arange(n_axial) + 0.5) * (hi - lo) / n_axial
        du = (hi - lo) / n_axial
        for uu in u:
            base = A + uu * seg.direction
            for r0, r1 in zip(r_edges[:-1], r_edges[1:]):
                rc = 0.5 * (r0 + r1)
                w = du * 0.5 * (r1 ** 2 - r0 ** 2) * (2.0 * np.pi / n_angles)
                for th in (np.arange(n_angles) + 0.5) * 2.0 * np.pi / n_angles:
                    x = base + rc * (np.cos(th) * seg.normal + np.sin(th) * seg.binormal)
                    # ownership: skip if inside an earlier piece
                    owned = True
                    for (i2, seg2, lo2, hi2) in pieces[:rank]:
                        rel = x - A
                        u2 = float(rel @ seg2.direction)
                        r2 = np.linalg.norm(rel - u2 * seg2.direction)
                        if lo2 - 1e-12 <= u2 <= hi2 + 1e-12 and r2 <= 1.0 + 1e-12:
                            owned = False
                            break
                    if owned:
                        pts.append(x)
                        wts.append(w)
    return JunctionGrid(center=A, points=np.asarray(pts), weights=np.asarray(wts))


def reduce_junction_loads(F_samples, G_samples, grid, tol=1e-8):
    """Reduce sampled junction volume forces to a point force and moment.

    Parameters
    ----------
    F_samples, G_samples : array_like, shape (P, 3)
        Values of the two scaled force fields at ``grid.points``; ``G`` must
        integrate to zero over the junction (its resultant would otherwise
        carry a different thickness power than its moment).
    grid : JunctionGrid

    Returns
    -------
    (Phi, M) : (3,) resultant of F and (3, 3) moment matrix of G.
    """
    F = np.asarray(F_samples, dtype=float)
    G = np.asarray(G_samples, dtype=float)
    w = grid.weights
    if F.shape != grid.points.shape or G.shape != grid.points.shape:
        raise ValueError("sample arrays must match the grid points")
    phi = np.einsum("p,pi->i", w, F)
    g_mean = np.einsum("p,pi->i", w, G)
    g_scale = np.einsum("p,pi->", w, np.abs(G)) + 1.0
    if np.linalg.norm(g_mean) > tol * g_scale:
        raise ValueError(
            f"junction moment field has nonzero resultant {g_mean}; "
            "split it into a zero-mean part and a force contribution"
        )
    rel = grid.points - grid.center
    M = np.einsum("p,pi,pj->ij", w, G, rel)
    return phi, M


def _edge_segment_loads(loads, edge_index, sk):
    e = sk.edges[edge_index]
    return loads.segment_loads.get(e.segment)


def evaluate_L(V, R, loads, sk):
    """Evaluate the reduced work functional on discretized fields.

    ``V`` and ``R`` are centerline / rotation fields as produced by the
    limit-energy module: both expose per-edge values on a shared arc grid
    (``R`` either nodal or per-interval constant for hull-valued fields) and
    vertex values ``at_vertex(key)``.  Line integrals use the trapezoid rule
    on the field's own grid; for per-interval rotation fields the g-terms use
    the exact integral of the piecewise-linear density on each interval.

    Raises
    ------
    KeyError
        If a point load references a vertex the fields do not carry.
    """
    total = 0.0
    for ei, e in enumerate(sk.edges):
        seg = sk.segments[e.segment]
        sload = loads.segment_loads.get(e.segment)
        if sload is None:
            continue
        s = V.edge_arcs(ei)
        Vv = V.edge_values(ei)
        dphi = Vv - (seg.origin + s[:, None] * seg.direction)
        f = sload.force(s)
        integrand = np.einsum("ki,ki->k", f, dphi)
        total += np.pi * np.trapezoid(integrand, s)

        if R.nodal:
            Rv = R.edge_values(ei)
            gn = sload.g_normal(s)
            gb = sload.g_binormal(s)
            rot_n = np.einsum("kij,j->ki", Rv - np.eye(3), seg.normal)
            rot_b = np.einsum("kij,j->ki", Rv - np.eye(3), seg.binormal)
            integrand = (np.einsum("ki,ki->k", gn, rot_n) + np.einsum("ki,ki->k", gb, rot_b)) / 3.0
            total += np.pi * np.trapezoid(integrand, s)
        else:
            # interval-constant rotations: integrate the density exactly on
            # each interval, then pair with the interval matrix
            Rv = R.edge_values(ei)  # (n_intervals, 3, 3)
            for k in range(len(s) - 1):
                ss = np.linspace(s[k], s[k + 1], 3)
                gn_int = np.trapezoid(sload.g_normal(ss), ss, axis=0)
                gb_int = np.trapezoid(sload.g_binormal(ss), ss, axis=0)
                dR = Rv[k] - np.eye(3)
                total += np.pi / 3.0 * (gn_int @ (dR @ seg.normal) + gb_int @ (dR @ seg.binormal))

    for p in loads.point_loads:
        pos = sk.position(p.vertex)
        dV = V.at_vertex(p.vertex) - pos
        dR = R.at_vertex(p.vertex) - np.eye(3)
        total += float(p.force @ dV) + float(np.sum(dR * p.moment))
    return float(total)
