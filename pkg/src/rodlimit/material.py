"""Saint Venant-Kirchhoff material law and quadratic strain forms.

Two energy densities live here.  The full 3D density ``svk_density`` acts on
deformation gradients and blows up (+inf) on orientation-reversing ones.  The
quadratic form :class:`QForm6` acts on infinitesimal strain tensors packed as
6-vectors and is what the reduced one-dimensional models integrate over rod
cross-sections.

Strain packing convention
-------------------------
A symmetric strain E is stored as ``(E11, E12, E13, E22, E23, E33)``: each
off-diagonal entry appears once.  The isotropic form produced by
:func:`isotropic_q6` is written for exactly this packing, with ``lam + 2 mu``
on the normal slots, ``2 mu`` on the shear slots and ``lam`` coupling the
normal slots pairwise.  Evaluated on a strain with only ``E12 = a`` nonzero
(``lam=0, mu=1``) it gives ``2 a**2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SvkMaterial",
    "QForm6",
    "svk_density",
    "isotropic_q6",
    "q_of_strain",
    "strain_to_vector",
    "strain_from_vector",
]

# Index pairs of the strain 6-vector in matrix coordinates.
_PACK = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass(frozen=True)
class SvkMaterial:
    """Isotropic Saint Venant-Kirchhoff material given by Lame constants."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"first Lame constant must be nonnegative, got {self.lam}")

    @property
    def youngs_modulus(self):
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    @property
    def poisson_ratio(self):
        return self.lam / (2.0 * (self.lam + self.mu))


def svk_density(F, material):
    """Saint Venant-Kirchhoff energy of a deformation gradient.

    ``(lam/8) tr(F^T F - I)^2 + (mu/4) tr((F^T F - I)^2)`` where the
    deformation is orientation preserving, ``+inf`` where ``det F <= 0``.
    Uniaxial stretch ``F = diag(1+e, 1, 1)`` gives
    ``(lam/2 + mu) (e + e^2/2)^2``.

    Parameters
    ----------
    F : array_like, shape (..., 3, 3)
    material : SvkMaterial

    Returns
    -------
    ndarray, shape (...)
    """
    F = np.asarray(F, dtype=float)
    C = np.swapaxes(F, -1, -2) @ F
    G = C - np.eye(3)
    tr = np.trace(G, axis1=-2, axis2=-1)
    tr2 = np.trace(G @ G, axis1=-2, axis2=-1)
    W = material.lam / 8.0 * tr * tr + material.mu / 4.0 * tr2
    det = np.linalg.det(F)
    return np.where(det > 0.0, W, np.inf)


@dataclass
class QForm6:
    """Symmetric positive definite quadratic form on packed strains.

    ``is_even`` records invariance under the central reflection of the
    cross-section (all the isotropic forms used here are even); the corrector
    solver relies on it to eliminate the axial stretch variable.
    """

    matrix: np.ndarray
    is_even: bool = True
    #: smallest / largest eigenvalue, filled on validation
    coercivity_lower: float = field(default=float("nan"))
    coercivity_upper: float = field(default=float("nan"))

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.shape != (6, 6):
            raise ValueError(f"expected a 6x6 matrix, got shape {M.shape}")
        if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
            raise ValueError("quadratic form matrix must be symmetric")
        eig = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eig[0] <= 0.0:
            raise ValueError(f"quadratic form must be positive definite, min eig {eig[0]:.3g}")
        self.matrix = 0.5 * (M + M.T)
        self.coercivity_lower = float(eig[0])
        self.coercivity_upper = float(eig[-1])


def isotropic_q6(material):
    """Isotropic quadratic strain form for the packed 6-vector convention.

    For ``lam = 0, mu = 1`` this is ``2 * I``; for ``lam = mu = 1`` the
    (1,1) entry is 3, the (1,4) entry 1 and the (2,2) entry 2 (1-based).
    """
    lam, mu = material.lam, material.mu
    M = np.zeros((6, 6))
    normal = [0, 3, 5]
    shear = [1, 2, 4]
    for i in normal:
        M[i, i] = lam + 2.0 * mu
    for i in shear:
        M[i, i] = 2.0 * mu
    for i in normal:
        for j in normal:
            if i != j:
                M[i, j] = lam
    return QForm6(matrix=M, is_even=True)


def strain_to_vector(E):
    """Pack symmetric (..., 3, 3) strains into (..., 6) vectors.

    Input that is not symmetric within roundoff is symmetrized first and a
    warning is emitted, since silently reading only the upper triangle would
    hide a probable caller bug.
    """
    E = np.asarray(E, dtype=float)
    asym = np.linalg.norm(E - np.swapaxes(E, -1, -2), axis=(-2, -1))
    scale = np.linalg.norm(E, axis=(-2, -1))
    if np.any(asym > 1e-10 * np.maximum(1.0, scale)):
        warnings.warn("strain input is not symmetric; using its symmetric part", stacklevel=2)
    Es = 0.5 * (E + np.swapaxes(E, -1, -2))
    return np.stack([Es[..., i, j] for i, j in _PACK], axis=-1)


def strain_from_vector(v):
    """Unpack (..., 6) strain vectors into symmetric (..., 3, 3) matrices."""
    v = np.asarray(v, dtype=float)
    E = np.empty(v.shape[:-1] + (3, 3), dtype=float)
    for k, (i, j) in enumerate(_PACK):
        E[..., i, j] = v[..., k]
        E[..., j, i] = v[..., k]
    return E


def q_of_strain(E, form):
    """Evaluate a quadratic strain form on strains.

    Parameters
    ----------
    E : array_like
        Either packed vectors of shape ``(..., 6)`` or symmetric matrices of
        shape ``(..., 3, 3)`` (symmetrized with a warning if needed).
    form : QForm6

    Returns
    -------
    ndarray, shape (...)
    """
    E = np.asarray(E, dtype=float)
    if E.shape[-2:] == (3, 3):
        v = strain_to_vector(E)
    elif E.shape[-1] == 6:
        v = E
    else:
        raise ValueError(f"expected (...,6) or (...,3,3) strain, got shape {E.shape}")
    return np.einsum("...i,ij,...j->...", v, form.matrix, v)
