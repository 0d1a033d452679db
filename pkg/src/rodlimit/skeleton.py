"""Structure skeletons: straight segments, knots, frames and junction geometry.

A skeleton is the 1D backbone of a rod structure: a finite set of straight
segments in space, each carrying an orthonormal frame (t, n, b) with t the
axis direction.  Points shared by two or more segments are knots; segment
endpoints that belong to a single segment are extremities, a subset of which
is clamped.  The physical structure of half-thickness delta is the union of
cylinders of radius delta around the segments, and around every knot A one
carves out a junction region: the union of the incident cylinder pieces
within axial distance rho0*delta of A.

The module builds this data from raw segment specs, auto-detecting knots from
pairwise intersections, and offers a sampled numerical validation of the
junction geometry (disjointness, clean decomposition into cylinders away from
the junctions, bounded junction diameter) for a concrete thickness delta.

Solvers work on the derived vertex/edge graph: vertices are knots plus
extremities, edges are the sub-segments between consecutive special points of
a segment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Segment",
    "Knot",
    "Vertex",
    "Edge",
    "Skeleton",
    "JunctionReport",
    "default_frame",
    "build_skeleton",
    "validate_junctions",
]


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


def default_frame(t):
    """Deterministic frame completion for a unit axis direction.

    If ``|t . e3| < 0.9`` the normal is ``normalize(e3 x t)``, otherwise
    ``normalize(e1 x t)``; the binormal is ``t x n``.  The rule covers every
    unit vector and returns a right-handed orthonormal triple.
    """
    t = np.asarray(t, dtype=float)
    if abs(np.linalg.norm(t) - 1.0) > 1e-8:
        raise ValueError("default_frame expects a unit direction")
    if abs(t[2]) < 0.9:
        n = _unit(np.cross([0.0, 0.0, 1.0], t))
    else:
        n = _unit(np.cross([1.0, 0.0, 0.0], t))
    b = np.cross(t, n)
    return n, b


@dataclass
class Segment:
    """One straight rod axis with its cross-section frame."""

    name: str
    origin: np.ndarray
    direction: np.ndarray
    length: float
    normal: np.ndarray
    binormal: np.ndarray
    #: arc-lengths of the knots sitting on this segment, strictly increasing
    knot_arcs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def point(self, s):
        """Position on the axis at arc-length ``s`` (vectorized)."""
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.direction if s.ndim else self.origin + s * self.direction

    @property
    def end(self):
        return self.origin + self.length * self.direction

    def frame(self):
        """Columns (t, n, b) as a 3x3 matrix."""
        return np.column_stack([self.direction, self.normal, self.binormal])


@dataclass
class Knot:
    """A point shared by at least two segments."""

    position: np.ndarray
    #: list of (segment index, arc-length) pairs
    incidence: list
    #: True when the knot is an endpoint of every incident segment
    is_corner: bool = False


@dataclass
class Vertex:
    """Graph node of the skeleton: a knot or an extremity."""

    key: str
    position: np.ndarray
    kind: str  # "knot" or "extremity"
    knot_index: int | None = None


@dataclass
class Edge:
    """Sub-segment between two consecutive special points of a segment."""

    segment: int
    s0: float
    s1: float
    v0: str
    v1: str

    @property
    def length(self):
        return self.s1 - self.s0


@dataclass
class Skeleton:
    segments: list
    knots: list
    vertices: dict
    edges: list
    clamped: tuple
    rho0: float
    delta0: float
    geom_tol: float

    @property
    def extremity_keys(self):
        return [k for k, v in self.vertices.items() if v.kind == "extremity"]

    @property
    def knot_keys(self):
        return [k for k, v in self.vertices.items() if v.kind == "knot"]

    def position(self, key):
        return self.vertices[key].position

    def segment_index(self, name):
        for i, seg in enumerate(self.segments):
            if seg.name == name:
                return i
        raise KeyError(f"no segment named {name!r}")

    def cycle_count(self):
        """Number of independent cycles of the vertex/edge graph."""
        return len(self.edges) - len(self.vertices) + self._component_count()

    def _component_count(self):
        keys = list(self.vertices)
        index = {k: i for i, k in enumerate(keys)}
        parent = list(range(len(keys)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in self.edges:
            a, b = find(index[e.v0]), find(index[e.v1])
            if a != b:
                parent[a] = b
        return len({find(i) for i in range(len(keys))})

    def min_knot_distance(self):
        """Smallest distance between distinct knots.

        Structures with fewer than two knots fall back to the smallest
        distance between special points sharing a segment (the minimum edge
        length), so the thickness bound stays meaningful for single rods and
        L-frames.
        """
        pts = [k.position for k in self.knots]
        if len(pts) >= 2:
            return min(
                float(np.linalg.norm(a - b)) for a, b in itertools.combinations(pts, 2)
            )
        return min(e.length for e in self.edges)

    def summary_dict(self):
        return {
            "segments": [
                {
                    "name": s.name,
                    "origin": s.origin.tolist(),
                    "direction": s.direction.tolist(),
                    "length": s.length,
                    "knot_arcs": s.knot_arcs.tolist(),
                }
                for s in self.segments
            ],
            "knots": [
                {
                    "position": k.position.tolist(),
                    "incidence": [[int(i), float(a)] for i, a in k.incidence],
                    "is_corner": k.is_corner,
                }
                for k in self.knots
            ],
            "extremities": self.extremity_keys,
            "clamped": list(self.clamped),
            "rho0": self.rho0,
            "delta0": self.delta0,
            "cycles": self.cycle_count(),
        }


def _segment_from_spec(spec, index):
    if isinstance(spec, Segment):
        return spec
    if not isinstance(spec, dict):
        raise TypeError(f"segment spec {index} must be a dict or Segment, got {type(spec)!r}")
    name = spec.get("name", f"s{index}")
    if "endpoints" in spec:
        a = np.asarray(spec["endpoints"][0], dtype=float)
        b = np.asarray(spec["endpoints"][1], dtype=float)
        length = float(np.linalg.norm(b - a))
        if length <= 0.0:
            raise ValueError(f"segment {name!r}: coincident endpoints")
        origin, direction = a, (b - a) / length
    else:
        try:
            origin = np.asarray(spec["origin"], dtype=float)
            direction = np.asarray(spec["direction"], dtype=float)
            length = float(spec["length"])
        except KeyError as exc:
            raise ValueError(
                f"segment {name!r}: need either 'endpoints' or 'origin'/'direction'/'length'"
            ) from exc
        if abs(np.linalg.norm(direction) - 1.0) > 1e-8:
            raise ValueError(
                f"segment {name!r}: direction must be a unit vector "
                f"(norm {np.linalg.norm(direction):.6g}); normalize it explicitly"
            )
        if length <= 0.0:
            raise ValueError(f"segment {name!r}: length must be positive")
    if "normal" in spec:
        n = np.asarray(spec["normal"], dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-8 or abs(float(n @ direction)) > 1e-8:
            raise ValueError(f"segment {name!r}: normal must be a unit vector orthogonal to the axis")
        b = np.cross(direction, n)
    else:
        n, b = default_frame(direction)
    return Segment(name=name, origin=origin, direction=direction, length=length, normal=n, binormal=b)


def _pairwise_intersections(segments, tol):
    """Closest-approach intersection points between all segment pairs."""
    hits = []  # (point, i, si, j, sj)
    for i, j in itertools.combinations(range(len(segments)), 2):
        si, sj = segments[i], segments[j]
        d = sj.origin - si.origin
        dot = float(si.direction @ sj.direction)
        denom = 1.0 - dot * dot
        if denom < 1e-14:
            # Parallel axes.  Collinear overlap is a modelling error; a
            # single shared endpoint of two collinear segments is a knot.
            offset = d - (d @ si.direction) * si.direction
            if np.linalg.norm(offset) > tol:
                continue
            u0 = float(d @ si.direction)
            u1 = u0 + dot * sj.length
            lo, hi = max(0.0, min(u0, u1)), min(si.length, max(u0, u1))
            if hi - lo > tol:
                raise ValueError(
                    f"segments {si.name!r} and {sj.name!r} are collinear and overlap; "
                    "split or merge them so segments meet only at points"
                )
            if hi - lo > -tol:
                s_i = 0.5 * (lo + hi)
                s_j = (s_i - u0) / dot
                hits.append((si.point(s_i), i, s_i, j, s_j))
            continue
        b1 = float(d @ si.direction)
        b2 = float(d @ sj.direction)
        s_i = (b1 - dot * b2) / denom
        s_j = (dot * b1 - b2) / denom
        if -tol <= s_i <= si.length + tol and -tol <= s_j <= sj.length + tol:
            p_i = si.point(np.clip(s_i, 0.0, si.length))
            p_j = sj.point(np.clip(s_j, 0.0, sj.length))
            if np.linalg.norm(p_i - p_j) <= tol:
                s_i = float(np.clip(s_i, 0.0, si.length))
                s_j = float(np.clip(s_j, 0.0, sj.length))
                hits.append((0.5 * (p_i + p_j), i, s_i, j, s_j))
    return hits


def build_skeleton(segment_specs, clamped=(), rho0=2.0, delta0=None):
    """Assemble a validated skeleton from raw segment specifications.

    Parameters
    ----------
    segment_specs : sequence
        Each entry is a dict with either ``endpoints: (a, b)`` or
        ``origin / direction / length`` (direction must already be unit), and
        optionally ``name`` and ``normal``.  Frames default to
        :func:`default_frame`.
    clamped : sequence of str
        Extremity ids of the form ``"<segment name>:start"`` or ``":end"``.
    rho0 : float
        Junction radius multiplier, at least 1.
    delta0 : float, optional
        Admissible thickness bound.  Defaults to a quarter of the smallest
        knot distance divided by ``rho0``.

    Returns
    -------
    Skeleton

    Raises
    ------
    ValueError
        Non-unit directions, collinear overlapping segments, a disconnected
        union, unknown or non-extremity clamp ids, or an inadmissible
        ``rho0`` / ``delta0`` combination.
    """
    if not segment_specs:
        raise ValueError("a skeleton needs at least one segment")
    segments = [_segment_from_spec(s, i) for i, s in enumerate(segment_specs)]
    names = [s.name for s in segments]
    if len(set(names)) != len(names):
        raise ValueError("segment names must be unique")
    scale = max(s.length for s in segments)
    tol = 1e-9 * max(1.0, scale)

    hits = _pairwise_intersections(segments, tol)

    # Cluster intersection points into knots.
    clusters = []  # (position, {seg: arc})
    for point, i, s_i, j, s_j in hits:
        for cl in clusters:
            if np.linalg.norm(cl[0] - point) <= 10.0 * tol:
                cl[1].setdefault(i, s_i)
                cl[1].setdefault(j, s_j)
                break
        else:
            clusters.append((point, {i: s_i, j: s_j}))
    clusters.sort(key=lambda cl: tuple(np.round(cl[0], 9)))

    knots = []
    for point, arcs in clusters:
        incidence = sorted(arcs.items())
        corner = all(
            min(a, segments[i].length - a) <= 10.0 * tol for i, a in incidence
        )
        knots.append(Knot(position=point, incidence=incidence, is_corner=corner))

    for i, seg in enumerate(segments):
        arcs = sorted(a for k in knots for (ii, a) in k.incidence if ii == i)
        seg.knot_arcs = np.asarray(arcs)

    # Vertices: knots first, then free extremities.
    vertices = {}
    for k_idx, knot in enumerate(knots):
        key = f"knot:{k_idx}"
        vertices[key] = Vertex(key=key, position=knot.position, kind="knot", knot_index=k_idx)

    def vertex_at(seg_idx, s):
        seg = segments[seg_idx]
        for k_idx, knot in enumerate(knots):
            for ii, a in knot.incidence:
                if ii == seg_idx and abs(a - s) <= 10.0 * tol:
                    return f"knot:{k_idx}"
        which = "start" if abs(s) <= 10.0 * tol else "end"
        key = f"{seg.name}:{which}"
        if key not in vertices:
            vertices[key] = Vertex(key=key, position=seg.point(s), kind="extremity")
        return key

    edges = []
    for i, seg in enumerate(segments):
        breaks = [0.0] + [a for a in seg.knot_arcs if 10.0 * tol < a < seg.length - 10.0 * tol] + [seg.length]
        vkeys = [vertex_at(i, s) for s in breaks]
        for (s0, s1, v0, v1) in zip(breaks[:-1], breaks[1:], vkeys[:-1], vkeys[1:]):
            edges.append(Edge(segment=i, s0=s0, s1=s1, v0=v0, v1=v1))

    clamped = tuple(clamped)
    for cid in clamped:
        if cid not in vertices:
            raise ValueError(f"clamped id {cid!r} does not name a vertex of the skeleton")
        if vertices[cid].kind != "extremity":
            raise ValueError(f"clamped id {cid!r} is a knot; only free extremities can be clamped")

    if rho0 < 1.0:
        raise ValueError(f"junction radius rho0 must be at least 1, got {rho0}")

    sk = Skeleton(
        segments=segments,
        knots=knots,
        vertices=vertices,
        edges=edges,
        clamped=clamped,
        rho0=float(rho0),
        delta0=0.0,
        geom_tol=tol,
    )
    if sk._component_count() != 1:
        raise ValueError("skeleton is disconnected; all segments must form one connected structure")

    dmin = sk.min_knot_distance()
    if delta0 is None:
        sk.delta0 = 0.25 * dmin / rho0
    else:
        if delta0 <= 0.0:
            raise ValueError("delta0 must be positive")
        if rho0 * delta0 > 0.25 * dmin * (1.0 + 1e-9):
            raise ValueError(
                f"rho0 * delta0 = {rho0 * delta0:.6g} exceeds a quarter of the smallest "
                f"knot distance ({dmin:.6g}); shrink delta0 or rho0"
            )
        sk.delta0 = float(delta0)
    return sk


def _axial_radial(x, seg):
    p = np.asarray(x, dtype=float) - seg.origin
    u = float(p @ seg.direction)
    r = float(np.linalg.norm(p - u * seg.direction))
    return u, r


def _in_cylinder(x, seg, delta, pad=1e-9):
    u, r = _axial_radial(x, seg)
    return (-pad <= u <= seg.length + pad) and r <= delta * (1.0 + 1e-9) + pad


def _in_junction(x, sk, knot, half_len, delta):
    for i, a in knot.incidence:
        seg = sk.segments[i]
        u, r = _axial_radial(x, seg)
        lo = max(a - half_len, 0.0)
        hi = min(a + half_len, seg.length)
        if lo - 1e-12 <= u <= hi + 1e-12 and r <= delta * (1.0 + 1e-9):
            return True
    return False


def _junction_samples(sk, knot, half_len, delta, n_axial=9, n_theta=8):
    pts = []
    for i, a in knot.incidence:
        seg = sk.segments[i]
        lo = max(a - half_len, 0.0)
        hi = min(a + half_len, seg.length)
        for u in np.linspace(lo, hi, n_axial):
            axis_pt = seg.point(float(u))
            for theta in np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False):
                off = np.cos(theta) * seg.normal + np.sin(theta) * seg.binormal
                pts.append(axis_pt + 0.99 * delta * off)
            pts.append(axis_pt)
    return np.asarray(pts)


@dataclass
class JunctionReport:
    """Outcome of the sampled junction-geometry checks."""

    delta: float
    ok: bool
    violations: list
    checks: dict

    def __bool__(self):
        return self.ok


def validate_junctions(sk, delta):
    """Numerically check the junction geometry of ``sk`` at thickness ``delta``.

    Three sampled checks: (a) the enlarged junctions of distinct knots are
    pairwise disjoint, (b) outside the junctions the structure decomposes
    into disjoint straight cylinders, (c) every junction has diameter at most
    ``(2 rho0 + 5) delta``.  Violations are collected and returned, never
    raised, since they mean the caller should change ``delta`` or ``rho0``.
    """
    if delta <= 0.0:
        raise ValueError("thickness delta must be positive")
    violations = []
    checks = {"disjointness": 0, "decomposition": 0, "diameter": 0}
    if delta > sk.delta0 * (1.0 + 1e-9):
        violations.append(
            {
                "check": "thickness",
                "detail": f"delta {delta:.6g} exceeds the admissible bound delta0 {sk.delta0:.6g}",
            }
        )

    half_big = (sk.rho0 + 1.0) * delta
    half_core = sk.rho0 * delta

    # (a) enlarged junctions pairwise disjoint
    clouds = [_junction_samples(sk, k, half_big, delta) for k in sk.knots]
    for a_idx, b_idx in itertools.combinations(range(len(sk.knots)), 2):
        checks["disjointness"] += len(clouds[a_idx])
        for x in clouds[a_idx]:
            if _in_junction(x, sk, sk.knots[b_idx], half_big, delta):
                violations.append(
                    {
                        "check": "disjointness",
                        "knots": [a_idx, b_idx],
                        "point": [float(c) for c in x],
                    }
                )
                break

    # (b) away from all junction cores the rods are disjoint cylinders
    for i, seg in enumerate(sk.segments):
        windows = [(max(a - half_core, 0.0), min(a + half_core, seg.length)) for a in seg.knot_arcs]
        arcs = [
            u
            for u in np.linspace(0.0, seg.length, 60)
            if not any(lo - 1e-12 <= u <= hi + 1e-12 for lo, hi in windows)
        ]
        for u in arcs:
            axis_pt = seg.point(float(u))
            for theta in np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False):
                off = np.cos(theta) * seg.normal + np.sin(theta) * seg.binormal
                x = axis_pt + 0.99 * delta * off
                checks["decomposition"] += 1
                in_any_junction = any(
                    _in_junction(x, sk, k, half_core, delta) for k in sk.knots
                )
                if in_any_junction:
                    continue
                for j, other in enumerate(sk.segments):
                    if j != i and _in_cylinder(x, other, delta):
                        violations.append(
                            {
                                "check": "decomposition",
                                "segments": [i, j],
                                "point": [float(c) for c in x],
                            }
                        )
                        break

    # (c) junction diameter bound
    bound = (2.0 * sk.rho0 + 5.0) * delta
    for k_idx, knot in enumerate(sk.knots):
        cloud = _junction_samples(sk, knot, half_core, delta, n_axial=5, n_theta=6)
        checks["diameter"] += len(cloud)
        diff = cloud[:, None, :] - cloud[None, :, :]
        diam = float(np.sqrt((diff ** 2).sum(axis=2).max()))
        if diam > bound * (1.0 + 1e-9):
            violations.append(
                {"check": "diameter", "knot": k_idx, "diameter": diam, "bound": bound}
            )

    return JunctionReport(delta=delta, ok=not violations, violations=violations, checks=checks)
