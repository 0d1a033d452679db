"""Finite rotation arithmetic on plain numpy arrays.

Rotations are (3, 3) float arrays throughout the package; there is no wrapper
class.  This module provides the exponential and logarithm maps, projection of
an arbitrary matrix onto the rotation group, geodesic interpolation, convex
combinations of rotations (elements of the convex hull of SO(3), which show up
as relaxed variables in the scaled-load regime), and the quaternion helpers the
solvers build on.

Conventions
-----------
* ``skew(w) @ x == np.cross(w, x)``.
* Quaternions are scalar-first ``(w, x, y, z)`` with ``w >= 0`` after
  normalization, so the logarithm always returns the rotation vector with
  angle in ``[0, pi]``.
* All functions accept stacked inputs: an array of shape ``(..., 3)`` or
  ``(..., 3, 3)`` is processed along the leading axes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeodesicAmbiguityWarning",
    "ConvexRotation",
    "skew",
    "unskew",
    "exp_so3",
    "log_so3",
    "is_rotation",
    "project_to_rotation",
    "geodesic_interpolate",
    "conv_combination",
    "quat_from_matrix",
    "matrix_from_quat",
    "quat_multiply",
    "random_rotation",
]

#: Orthogonality tolerance below which a matrix counts as a valid rotation.
ROTATION_TOL = 1e-10


class GeodesicAmbiguityWarning(UserWarning):
    """Raised when interpolating between rotations a half turn apart.

    At relative angle pi the geodesic is not unique; the returned path uses a
    deterministic axis choice and is still a valid minimizing geodesic.
    """


def skew(w):
    """Return the skew-symmetric matrix S with ``S @ x = cross(w, x)``.

    Accepts shape ``(..., 3)`` and returns ``(..., 3, 3)``.
    """
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape + (3,), dtype=float)
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def unskew(S):
    """Inverse of :func:`skew`; uses the antisymmetric part of the input."""
    S = np.asarray(S, dtype=float)
    A = 0.5 * (S - np.swapaxes(S, -1, -2))
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def exp_so3(w):
    """Rotation matrix for the rotation vector ``w`` (Rodrigues formula).

    The angle is ``norm(w)`` and the axis ``w / norm(w)``; ``w = 0`` maps to
    the identity.  Small angles use the series expansion of the two Rodrigues
    coefficients, so the map is smooth through zero.

    Parameters
    ----------
    w : array_like, shape (..., 3)

    Returns
    -------
    ndarray, shape (..., 3, 3)
    """
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    theta2 = theta * theta
    small = theta < 1e-6
    # sin(t)/t and (1-cos(t))/t^2 with series fallbacks near zero.
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - theta2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(
            small,
            0.5 - theta2 / 24.0,
            (1.0 - np.cos(theta)) / np.where(small, 1.0, theta2),
        )
    S = skew(w)
    eye = np.broadcast_to(np.eye(3), S.shape)
    return eye + a[..., None, None] * S + b[..., None, None] * (S @ S)


def quat_from_matrix(R):
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0`` for a rotation matrix.

    Uses the branch of Shepperd's method selected by the largest diagonal
    combination, which is stable for all rotation angles including pi.
    """
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    Rf = R.reshape((-1, 3, 3))
    n = Rf.shape[0]
    q = np.empty((n, 4), dtype=float)

    t = np.trace(Rf, axis1=-2, axis2=-1)
    m = np.stack(
        [
            1.0 + t,
            1.0 + 2.0 * Rf[:, 0, 0] - t,
            1.0 + 2.0 * Rf[:, 1, 1] - t,
            1.0 + 2.0 * Rf[:, 2, 2] - t,
        ],
        axis=1,
    )
    case = np.argmax(m, axis=1)

    idx = case == 0
    if np.any(idx):
        r = Rf[idx]
        s = 2.0 * np.sqrt(m[idx, 0])
        q[idx, 0] = 0.25 * s
        q[idx, 1] = (r[:, 2, 1] - r[:, 1, 2]) / s
        q[idx, 2] = (r[:, 0, 2] - r[:, 2, 0]) / s
        q[idx, 3] = (r[:, 1, 0] - r[:, 0, 1]) / s
    idx = case == 1
    if np.any(idx):
        r = Rf[idx]
        s = 2.0 * np.sqrt(m[idx, 1])
        q[idx, 0] = (r[:, 2, 1] - r[:, 1, 2]) / s
        q[idx, 1] = 0.25 * s
        q[idx, 2] = (r[:, 0, 1] + r[:, 1, 0]) / s
        q[idx, 3] = (r[:, 0, 2] + r[:, 2, 0]) / s
    idx = case == 2
    if np.any(idx):
        r = Rf[idx]
        s = 2.0 * np.sqrt(m[idx, 2])
        q[idx, 0] = (r[:, 0, 2] - r[:, 2, 0]) / s
        q[idx, 1] = (r[:, 0, 1] + r[:, 1, 0]) / s
        q[idx, 2] = 0.25 * s
        q[idx, 3] = (r[:, 1, 2] + r[:, 2, 1]) / s
    idx = case == 3
    if np.any(idx):
        r = Rf[idx]
        s = 2.0 * np.sqrt(m[idx, 3])
        q[idx, 0] = (r[:, 1, 0] - r[:, 0, 1]) / s
        q[idx, 1] = (r[:, 0, 2] + r[:, 2, 0]) / s
        q[idx, 2] = (r[:, 1, 2] + r[:, 2, 1]) / s
        q[idx, 3] = 0.25 * s

    q /= np.linalg.norm(q, axis=1, keepdims=True)
    flip = q[:, 0] < 0.0
    q[flip] *= -1.0
    return q.reshape(batch + (4,))


def matrix_from_quat(q):
    """Rotation matrix for a unit quaternion ``(w, x, y, z)``."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def quat_multiply(q1, q2):
    """Hamilton product, broadcasting over leading axes."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, v1 = q1[..., 0], q1[..., 1:]
    w2, v2 = q2[..., 0], q2[..., 1:]
    w = w1 * w2 - np.sum(v1 * v2, axis=-1)
    v = w1[..., None] * v2 + w2[..., None] * v1 + np.cross(v1, v2)
    return np.concatenate([w[..., None], v], axis=-1)


def log_so3(R):
    """Rotation vector of a rotation matrix, robust across all angles.

    Goes through the unit quaternion, so angles near 0 and near pi are both
    handled without catastrophic cancellation.  The returned vector has norm
    in ``[0, pi]``; at exactly pi the axis sign follows the quaternion
    convention of :func:`quat_from_matrix` (deterministic).
    """
    q = quat_from_matrix(R)
    w = q[..., 0]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    # theta = 2*atan2(s, w);  rotation vector = (theta/s) * v, with the
    # series 2/w * (1 - s^2/(3 w^2)) as s -> 0.
    small = s < 1e-8
    theta = 2.0 * np.arctan2(s, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(
            small,
            2.0 / np.where(w == 0.0, 1.0, w) * (1.0 - s * s / (3.0 * np.where(w == 0.0, 1.0, w) ** 2)),
            theta / np.where(small, 1.0, s),
        )
    return factor[..., None] * v


def is_rotation(R, tol=ROTATION_TOL):
    """True when ``R`` is orthogonal within ``tol`` and has determinant +1."""
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        return False
    err = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(3), axis=(-2, -1))
    det = np.linalg.det(R)
    return bool(np.all(err <= 10.0 * tol) and np.all(np.abs(det - 1.0) <= 100.0 * tol))


def project_to_rotation(M, return_unique=False):
    """Nearest rotation matrix to ``M`` in the Frobenius norm.

    Computed from the SVD ``M = U diag(s) V^T`` as ``U diag(1, 1, d) V^T``
    with ``d = det(U V^T)``, which enforces determinant +1 even when ``M``
    has negative determinant.  The projection is scale invariant:
    ``project_to_rotation(c * M) == project_to_rotation(M)`` for ``c > 0``.

    For rank-deficient input the minimizer may not be unique; a deterministic
    representative is still returned (numpy's SVD is deterministic for a given
    input).  Pass ``return_unique=True`` to also get a uniqueness flag.

    Parameters
    ----------
    M : array_like, shape (..., 3, 3)
    return_unique : bool
        When true, return ``(R, unique)`` where ``unique`` is a bool array
        over the leading axes.

    Returns
    -------
    ndarray or (ndarray, ndarray)
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    d = np.linalg.det(U @ Vt)
    D = np.ones(M.shape[:-2] + (3,))
    D[..., 2] = d
    R = (U * D[..., None, :]) @ Vt
    if not return_unique:
        return R
    # Uniqueness of the nearest rotation: with the singular values sorted
    # s0 >= s1 >= s2 and d = det sign, the minimizer is unique iff
    # s1 + d*s2 > 0 (strictly).  Rank <= 1 always fails this.
    scale = np.where(s[..., 0] > 0.0, s[..., 0], 1.0)
    unique = (s[..., 1] + d * s[..., 2]) > 1e-12 * scale
    return R, unique


def geodesic_interpolate(R0, R1, tau):
    """Point at parameter ``tau`` on the geodesic from ``R0`` to ``R1``.

    ``tau = 0`` gives ``R0`` and ``tau = 1`` gives ``R1``; values outside
    ``[0, 1]`` extrapolate along the same geodesic.  Satisfies the symmetry
    ``interp(R0, R1, tau) == interp(R1, R0, 1 - tau)`` up to roundoff.

    When ``R0`` and ``R1`` differ by a half turn the connecting geodesic is
    not unique; a :class:`GeodesicAmbiguityWarning` is emitted and the
    deterministic axis from :func:`log_so3` is used.
    """
    R0 = np.asarray(R0, dtype=float)
    R1 = np.asarray(R1, dtype=float)
    rel = log_so3(np.swapaxes(R0, -1, -2) @ R1)
    angle = np.linalg.norm(rel, axis=-1)
    if np.any(angle > np.pi - 1e-9):
        warnings.warn(
            "geodesic interpolation between rotations a half turn apart is "
            "not unique; using a deterministic axis",
            GeodesicAmbiguityWarning,
            stacklevel=2,
        )
    tau = np.asarray(tau, dtype=float)
    return R0 @ exp_so3(tau[..., None] * rel if tau.ndim else tau * rel)


@dataclass
class ConvexRotation:
    """An element of the convex hull of the rotation group with certificate.

    The matrix is stored together with the convex weights and rotations that
    generated it, so membership in the hull can always be re-verified rather
    than trusted.  All singular values of a hull element are at most 1.
    """

    matrix: np.ndarray
    weights: np.ndarray
    rotations: np.ndarray
    #: Filled by :meth:`validate`; maximum singular value of the matrix.
    max_singular_value: float = field(default=float("nan"))

    def validate(self, tol=1e-9):
        """Check the stored certificate; raises ``ValueError`` on failure."""
        w = np.asarray(self.weights, dtype=float)
        rots = np.asarray(self.rotations, dtype=float)
        if np.any(w < -1e-12):
            raise ValueError("convex weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"convex weights sum to {w.sum():.12g}, expected 1")
        if not is_rotation(rots):
            raise ValueError("certificate contains a matrix that is not a rotation")
        recomposed = np.einsum("k,kij->ij", w, rots)
        if np.linalg.norm(recomposed - self.matrix) > tol * max(1.0, np.linalg.norm(self.matrix)):
            raise ValueError("stored matrix does not match its certificate")
        smax = float(np.linalg.svd(self.matrix, compute_uv=False)[0])
        if smax > 1.0 + 1e-10:
            raise ValueError(f"max singular value {smax:.12g} exceeds 1")
        self.max_singular_value = smax
        return self


def conv_combination(rotations, weights):
    """Convex combination of rotations as a certified hull element.

    Parameters
    ----------
    rotations : array_like, shape (k, 3, 3)
    weights : array_like, shape (k,)
        Nonnegative, summing to 1 within 1e-9.

    Returns
    -------
    ConvexRotation
    """
    rots = np.asarray(rotations, dtype=float)
    w = np.asarray(weights, dtype=float)
    if rots.ndim != 3 or rots.shape[-2:] != (3, 3) or w.shape != rots.shape[:1]:
        raise ValueError("need (k,3,3) rotations and (k,) weights")
    M = np.einsum("k,kij->ij", w, rots)
    return ConvexRotation(matrix=M, weights=w, rotations=rots).validate()


def random_rotation(rng):
    """Uniform random rotation (Haar measure) from a numpy Generator."""
    q = rng.normal(size=4)
    return matrix_from_quat(q / np.linalg.norm(q))
