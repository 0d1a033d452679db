"""Limit models for elastic structures made of thin straight rods.

The package computes, for a structure of cylindrical rods glued along a
skeleton of straight segments, the asymptotic model that emerges when the rod
thickness goes to zero: homogenized bending/torsion stiffness of the circular
cross-section, minimization of the limit energies over rotation fields on the
skeleton (quadratic regime) or over convex relaxations (soft load regimes),
and a numerical decomposition of 3D deformations into an elementary part
driven by a centerline and a rotation field plus a residual whose norms obey
thickness power laws.
"""

from rodlimit.material import SvkMaterial, QForm6, svk_density, isotropic_q6, q_of_strain
from rodlimit.rotation import (
    ConvexRotation,
    conv_combination,
    exp_so3,
    geodesic_interpolate,
    log_so3,
    project_to_rotation,
)
from rodlimit.skeleton import Skeleton, build_skeleton, default_frame, validate_junctions

__version__ = "0.1.0"

__all__ = [
    "SvkMaterial",
    "QForm6",
    "svk_density",
    "isotropic_q6",
    "q_of_strain",
    "ConvexRotation",
    "conv_combination",
    "exp_so3",
    "geodesic_interpolate",
    "log_so3",
    "project_to_rotation",
    "Skeleton",
    "build_skeleton",
    "default_frame",
    "validate_junctions",
    "__version__",
]
