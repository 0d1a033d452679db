"""Reference solvers used by the test suite to cross-check the production code.

Two independent oracles live here:

``dense_rod_minimizer``
    Minimizes the quadratic-regime energy of a single clamped rod on a dense
    uniform grid (hundreds of intervals) by quasi-Newton descent on nodal
    axis-angle coordinates, with random restarts.  Nothing of the production
    solver is reused: the discrete energy, its gradient, the centerline
    integration and the optimizer driver are all written here from scratch.

``grid_conv_hull_optimum``
    Computes the exact optimum of the convex-hull (soft-load) problem for a
    tiny chain of rods over a finite rotation sample set.  The objective is
    linear over a product of simplices, one simplex per interval and one per
    interior vertex carrying a couple, and a chain clamped at its base has no
    coupling constraints between blocks.  The optimum is therefore attained
    at extreme points, so enumerating the pure rotation assignments per block
    solves the linear program exactly.

Both oracles intentionally depend only on the rotation utilities and the load
containers of :mod:`rodlimit`; everything else (quadrature, assembly,
optimization) is local to this module so that agreement with the production
solvers is a meaningful check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from rodlimit.loads import SegmentLoad
from rodlimit.rotation import exp_so3, log_so3, skew, unskew


@dataclass(frozen=True)
class OracleResult:
    """Outcome of a reference computation.

    ``value`` is the computed optimum, ``method`` a short tag naming the
    algorithm, and ``resolution`` records the discretization parameters the
    value was obtained with, so any tolerance quoted against it can be
    audited.  ``flagged`` is set when independent restarts disagreed beyond
    their expected spread; the best value is still returned.
    """

    value: float
    method: str
    resolution: dict
    flagged: bool = False
    detail: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# dense single-rod minimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleRodProblem:
    """A single straight rod clamped at arclength zero.

    ``frame`` has the tangent, normal and binormal as columns.  ``stiffness``
    is the 3x3 bending/torsion matrix acting on strain components expressed
    in that frame.  Loads are a distributed load (optional), a point force at
    the free end, and a point moment matrix at the free end.
    """

    origin: np.ndarray
    frame: np.ndarray
    length: float
    stiffness: np.ndarray
    load: SegmentLoad | None = None
    tip_force: np.ndarray | None = None
    tip_moment: np.ndarray | None = None


def _rodrigues_coeffs(theta):
    """Coefficients a = (1-cos)/t^2 and b = (t-sin)/t^3 with series guards."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    b = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / (safe**3))
    return a, b


def _rodrigues_coeff_rates(theta):
    """Derivatives a'(t)/t and b'(t)/t of the Rodrigues coefficients."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    small = theta < 1e-3
    safe = np.where(small, 1.0, theta)
    ap = np.where(
        small,
        -1.0 / 12.0 + t2 / 180.0,
        (safe * np.sin(safe) - 2.0 * (1.0 - np.cos(safe))) / safe**4,
    )
    bp = np.where(
        small,
        -1.0 / 60.0 + t2 / 1260.0,
        (safe * (1.0 - np.cos(safe)) - 3.0 * (safe - np.sin(safe))) / safe**5,
    )
    return ap, bp


def _kappa2(theta):
    """Coefficient of S^2 in the inverse differential of the matrix log."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    half = 0.5 * safe
    return np.where(
        small,
        1.0 / 12.0 + t2 / 720.0,
        (1.0 - half * np.cos(half) / np.sin(half)) / (safe * safe),
    )


def _inv_log_jacobians(c):
    """Left and right inverse differentials of log at the rotation vector c.

    For Q = exp(c): a left perturbation Q -> exp(eps) Q moves c by Jl @ eps,
    a right perturbation Q -> Q exp(eps) moves c by Jr @ eps.
    """
    theta = np.linalg.norm(c, axis=-1)
    S = skew(c)
    S2 = S @ S
    k2 = _kappa2(theta)[..., None, None]
    eye = np.eye(3)
    jl = eye - 0.5 * S + k2 * S2
    jr = eye + 0.5 * S + k2 * S2
    return jl, jr


def _exp_jacobian_T(w):
    """Transpose of the right differential of exp at w.

    exp(w + dw) = exp(w) exp(J dw) with J = I - a*S + b*S^2; the transpose
    flips the sign of the skew term.
    """
    theta = np.linalg.norm(w, axis=-1)
    a, b = _rodrigues_coeffs(theta)
    S = skew(w)
    return np.eye(3) + a[..., None, None] * S + b[..., None, None] * (S @ S)


def _geodesic_translation(c, t, h):
    """Integral of exp(tau*skew(c)/h) @ t over one interval, and its c-derivative.

    Returns ``d`` with shape (n, 3) such that the centerline increment of the
    interval is R_left @ d, together with ``D`` of shape (n, 3, 3) holding
    the derivative of d with respect to the interval rotation vector c.
    """
    theta = np.linalg.norm(c, axis=-1)
    a, b = _rodrigues_coeffs(theta)
    ap, bp = _rodrigues_coeff_rates(theta)
    ct = np.cross(c, t)
    cct = np.cross(c, ct)
    d = h * (t + a[:, None] * ct + b[:, None] * cct)
    cdott = c @ t
    eye = np.eye(3)
    D = h * (
        ap[:, None, None] * ct[:, :, None] * c[:, None, :]
        - a[:, None, None] * skew(t)
        + bp[:, None, None] * cct[:, :, None] * c[:, None, :]
        + b[:, None, None]
        * (cdott[:, None, None] * eye + c[:, :, None] * t[None, :] - 2.0 * t[:, None] * c[:, None, :])
    )
    return d, D


def _rod_energy_and_gradient(x, prob, n):
    """Discrete energy on n uniform intervals and its gradient in nodal axis-angle."""
    h = prob.length / n
    t = prob.frame[:, 0]
    nrm = prob.frame[:, 1]
    bnr = prob.frame[:, 2]
    A_amb = prob.frame @ prob.stiffness @ prob.frame.T

    W = x.reshape(n, 3)
    R = np.empty((n + 1, 3, 3))
    R[0] = np.eye(3)
    R[1:] = exp_so3(W)
    rel = np.swapaxes(R[:-1], -1, -2) @ R[1:]
    c = log_so3(rel)

    energy = float(np.einsum("ki,ij,kj->", c, A_amb, c)) / h

    jl, jr = _inv_log_jacobians(c)
    dE_dc = (2.0 / h) * c @ A_amb
    g_xi = np.zeros((n + 1, 3))
    g_xi[:-1] -= np.einsum("kji,kj->ki", jl, dE_dc)
    g_xi[1:] += np.einsum("kji,kj->ki", jr, dE_dc)

    # Centerline nodes from the closed-form geodesic translation per interval.
    d, D = _geodesic_translation(c, t, h)
    incr = np.einsum("kij,kj->ki", R[:-1], d)
    V = np.empty((n + 1, 3))
    V[0] = prob.origin
    V[1:] = prob.origin + np.cumsum(incr, axis=0)
    s_nodes = np.linspace(0.0, prob.length, n + 1)
    phi = prob.origin + s_nodes[:, None] * t

    # Ambient node weights dE/dV_j collected from every load pairing with V.
    node_w = np.zeros((n + 1, 3))
    if prob.load is not None:
        f = prob.load.force(s_nodes)
        trap = np.full(n + 1, h)
        trap[0] = trap[-1] = 0.5 * h
        energy -= np.pi * float(np.sum(trap[:, None] * f * (V - phi)))
        node_w -= np.pi * trap[:, None] * f

        gn = prob.load.g_normal(s_nodes)
        gb = prob.load.g_binormal(s_nodes)
        RmI_n = np.einsum("kij,j->ki", R, nrm) - nrm
        RmI_b = np.einsum("kij,j->ki", R, bnr) - bnr
        energy -= (np.pi / 3.0) * float(
            np.sum(trap[:, None] * (gn * RmI_n + gb * RmI_b))
        )
        Rt_gn = np.einsum("kji,kj->ki", R, gn)
        Rt_gb = np.einsum("kji,kj->ki", R, gb)
        g_xi -= (np.pi / 3.0) * trap[:, None] * (
            np.cross(np.broadcast_to(nrm, (n + 1, 3)), Rt_gn)
            + np.cross(np.broadcast_to(bnr, (n + 1, 3)), Rt_gb)
        )

    if prob.tip_force is not None:
        energy -= float(prob.tip_force @ (V[-1] - phi[-1]))
        node_w[-1] -= prob.tip_force

    if prob.tip_moment is not None:
        energy -= float(np.sum((R[-1] - np.eye(3)) * prob.tip_moment))
        g_xi[-1] -= 2.0 * unskew(R[-1].T @ prob.tip_moment)

    # V_j depends on the increments of all earlier intervals: suffix-sum the
    # node weights to get the sensitivity to each increment.
    suffix = np.cumsum(node_w[::-1], axis=0)[::-1]
    Wk = suffix[1:]
    u = np.einsum("kji,kj->ki", R[:-1], Wk)
    g_xi[:-1] += np.cross(d, u)
    Du = np.einsum("kji,kj->ki", D, u)
    g_xi[:-1] -= np.einsum("kji,kj->ki", jl, Du)
    g_xi[1:] += np.einsum("kji,kj->ki", jr, Du)

    grad = np.einsum("kij,kj->ki", _exp_jacobian_T(W), g_xi[1:])
    return energy, grad.ravel()


def _oracle_gamma(R, frame, h):
    """Per-interval strain rates of a nodal rotation array, in frame components."""
    rel = np.swapaxes(R[:-1], -1, -2) @ R[1:]
    return log_so3(rel) @ frame / h


def dense_rod_minimizer(
    problem: SingleRodProblem,
    n_intervals: int = 240,
    restarts: int = 3,
    seed: int = 0,
) -> OracleResult:
    """Minimize the clamped-rod energy on a dense grid, with random restarts.

    The unknowns are the axis-angle vectors of the free nodal rotations; the
    clamped node is pinned at the identity.  Each restart runs a bounded-memory
    quasi-Newton descent; the best minimum is returned and the result is
    flagged when restarts land more than 1e-6 apart.
    """
    if n_intervals < 200:
        raise ValueError("dense oracle needs at least 200 intervals")
    rng = np.random.default_rng(seed)
    n = int(n_intervals)

    starts = [np.zeros(3 * n)]
    for _ in range(max(0, restarts - 1)):
        starts.append(0.3 * rng.standard_normal(3 * n))

    values = []
    best = None
    for x0 in starts:
        res = scipy.optimize.minimize(
            _rod_energy_and_gradient,
            x0,
            args=(problem, n),
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": 30000,
                "maxfun": 60000,
                "ftol": 1e-18,
                "gtol": 1e-10,
                "maxcor": 40,
                "maxls": 80,
            },
        )
        values.append(float(res.fun))
        if best is None or res.fun < best.fun:
            best = res

    spread = max(values) - min(values) if len(values) > 1 else 0.0
    W = best.x.reshape(n, 3)
    R = np.empty((n + 1, 3, 3))
    R[0] = np.eye(3)
    R[1:] = exp_so3(W)
    h = problem.length / n
    return OracleResult(
        value=float(best.fun),
        method="dense-axis-angle-descent",
        resolution={"intervals": n, "restarts": restarts, "seed": seed},
        flagged=bool(spread > 1e-6),
        detail={
            "rotations": R,
            "gamma": _oracle_gamma(R, problem.frame, h),
            "restart_values": values,
            "restart_spread": spread,
            "grad_norm": float(np.max(np.abs(best.jac))),
        },
    )


# ---------------------------------------------------------------------------
# exact hull optimum for tiny chain instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HullChainRod:
    """One straight rod of a chain instance; frame columns are (t, n, b)."""

    origin: np.ndarray
    frame: np.ndarray
    length: float
    intervals: int = 1
    load: SegmentLoad | None = None


@dataclass(frozen=True)
class HullChainInstance:
    """Chain of rods clamped at the start of the first rod.

    Rod ``r`` starts where rod ``r - 1`` ends.  ``vertex_loads`` holds
    ``(vertex_index, force, moment)`` triples where vertex ``v`` for
    ``1 <= v <= n_rods - 1`` is the junction between rods ``v - 1`` and ``v``,
    vertex ``0`` is the clamped base and vertex ``n_rods`` the free tip.
    Forces may be ``None``; moments are 3x3 matrices or ``None``.
    """

    rods: tuple
    vertex_loads: tuple = ()


def grid_conv_hull_optimum(instance: HullChainInstance, samples) -> OracleResult:
    """Exact optimum of the hull relaxation of a small chain instance.

    Every interval and every interior vertex carrying a couple owns an
    independent convex combination of the rotation samples.  With the chain
    clamped only at its base there are no closure constraints, so the linear
    objective decouples into one cost vector per block and the exact optimum
    is the sum of the per-block minima over the extreme points (the pure
    samples).  Instances with more than 3 intervals in total or more than 60
    rotation samples are rejected.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[1:] != (3, 3):
        raise ValueError("samples must have shape (k, 3, 3)")
    n_samples = samples.shape[0]
    total_intervals = sum(int(r.intervals) for r in instance.rods)
    if total_intervals > 3 or n_samples > 60:
        raise ValueError(
            "instance too large for exact enumeration: at most 3 intervals "
            "and 60 rotation samples are supported"
        )

    n_rods = len(instance.rods)
    # Vertex reference positions along the chain.
    vertex_pos = [np.asarray(instance.rods[0].origin, dtype=float)]
    for rod in instance.rods:
        t = rod.frame[:, 0]
        vertex_pos.append(vertex_pos[-1] + rod.length * t)

    # Affine representation of every centerline node: a constant plus, per
    # earlier interval, a coefficient row against that interval's sample
    # choice.  coeffs maps block -> (3, n_samples).
    costs: dict[tuple, np.ndarray] = {}
    const = 0.0

    def block_cost(key):
        if key not in costs:
            costs[key] = np.zeros(n_samples)
        return costs[key]

    # Running affine description of the chain tip: constant part plus
    # {interval block: (3, n_samples) coefficient}.
    run_const = vertex_pos[0].copy()
    run_coeffs: dict[tuple, np.ndarray] = {}

    vertex_affine = [(run_const.copy(), dict(run_coeffs))]
    node_affine = []  # per rod: list of (s, const, coeffs) with trapezoid use
    for r, rod in enumerate(instance.rods):
        t = rod.frame[:, 0]
        h = rod.length / rod.intervals
        images = h * np.einsum("mij,j->im", samples, t)  # (3, n_samples)
        nodes = [(0.0, run_const.copy(), dict(run_coeffs))]
        for k in range(rod.intervals):
            key = ("interval", r, k)
            block_cost(key)
            run_coeffs = {kk: vv.copy() for kk, vv in run_coeffs.items()}
            run_coeffs[key] = run_coeffs.get(key, np.zeros((3, n_samples))) + images
            nodes.append(((k + 1) * h, run_const.copy(), dict(run_coeffs)))
        node_affine.append(nodes)
        vertex_affine.append((run_const.copy(), dict(run_coeffs)))

    # Distributed loads: trapezoid on the rod's node grid for the force term,
    # a 3-point trapezoid per interval for the couple densities.
    for r, rod in enumerate(instance.rods):
        if rod.load is None:
            continue
        t = rod.frame[:, 0]
        nvec = rod.frame[:, 1]
        bvec = rod.frame[:, 2]
        h = rod.length / rod.intervals
        start = vertex_pos[r]
        for s, cpart, coeffs in node_affine[r]:
            w = h if 0.0 < s < rod.length else 0.5 * h
            f = rod.load.force(s)
            phi = start + s * t
            const -= np.pi * w * float(f @ (cpart - phi))
            for key, mat in coeffs.items():
                block_cost(key)
                costs[key] -= np.pi * w * (f @ mat)
        for k in range(rod.intervals):
            key = ("interval", r, k)
            sgrid = np.linspace(k * h, (k + 1) * h, 3)
            gn_int = np.trapezoid(rod.load.g_normal(sgrid), sgrid, axis=0)
            gb_int = np.trapezoid(rod.load.g_binormal(sgrid), sgrid, axis=0)
            pair = np.einsum("i,mij,j->m", gn_int, samples, nvec) + np.einsum(
                "i,mij,j->m", gb_int, samples, bvec
            )
            costs[key] -= (np.pi / 3.0) * (pair - float(gn_int @ nvec + gb_int @ bvec))

    # Point loads at vertices.
    for v, force, moment in instance.vertex_loads:
        v = int(v)
        if force is not None:
            force = np.asarray(force, dtype=float)
            cpart, coeffs = vertex_affine[v]
            const -= float(force @ (cpart - vertex_pos[v]))
            for key, mat in coeffs.items():
                block_cost(key)
                costs[key] -= force @ mat
        if moment is not None:
            moment = np.asarray(moment, dtype=float)
            if 0 < v < n_rods:
                key = ("vertex", v)
            elif v == n_rods:
                key = ("interval", n_rods - 1, instance.rods[-1].intervals - 1)
            else:
                key = ("interval", 0, 0)
            block_cost(key)
            costs[key] -= np.einsum("ij,mij->m", moment, samples) - float(
                np.trace(moment)
            )

    assignment = {}
    value = const
    for key in sorted(costs):
        m = int(np.argmin(costs[key]))
        assignment[key] = m
        value += float(costs[key][m])

    return OracleResult(
        value=float(value),
        method="vertex-enumeration",
        resolution={"intervals": total_intervals, "samples": n_samples},
        detail={"assignment": assignment, "constant": const},
    )
